/**
 * HTTP client for the rating service.
 *
 * Submissions go through a sequential local queue: a network failure keeps
 * the job queued and retries until the server answers, so no choice is ever
 * silently lost and events reach the server in submission order. HTTP error
 * responses (bad request, exclusion conflicts) are not retried; they reject
 * the submission's promise.
 */
import type {
  Ack,
  ComparisonSubmission,
  RatingSubmission,
  SliceState,
  TaskPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

interface QueuedJob {
  path: string;
  body: unknown;
  resolve: (ack: Ack) => void;
  reject: (err: unknown) => void;
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

export class ApiClient {
  private queue: QueuedJob[] = [];
  private pumping = false;
  /** total POSTs attempted, exposed for tests */
  postAttempts = 0;

  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    private readonly retryDelayMs = 400,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!resp.ok) {
      throw new ApiError(resp.status, await describeError(resp));
    }
    return (await resp.json()) as T;
  }

  getTask(sessionId: string, rater: string, cursor: number): Promise<TaskPayload> {
    return this.getJson(`/sessions/${sessionId}/raters/${rater}/tasks/${cursor}`);
  }

  getSliceState(
    sessionId: string,
    rater: string,
    patientId: string,
    sliceIndex: number,
  ): Promise<SliceState> {
    return this.getJson(
      `/sessions/${sessionId}/raters/${rater}/slices/${encodeURIComponent(patientId)}/${sliceIndex}`,
    );
  }

  submitRating(sessionId: string, body: RatingSubmission): Promise<Ack> {
    return this.enqueue(`/sessions/${sessionId}/ratings`, body);
  }

  submitComparison(sessionId: string, body: ComparisonSubmission): Promise<Ack> {
    return this.enqueue(`/sessions/${sessionId}/comparisons`, body);
  }

  get pendingCount(): number {
    return this.queue.length;
  }

  private enqueue(path: string, body: unknown): Promise<Ack> {
    return new Promise<Ack>((resolve, reject) => {
      this.queue.push({ path, body, resolve, reject });
      void this.pump();
    });
  }

  private async pump(): Promise<void> {
    if (this.pumping) return;
    this.pumping = true;
    try {
      while (this.queue.length > 0) {
        const job = this.queue[0]!;
        let resp: Response;
        try {
          this.postAttempts += 1;
          resp = await this.fetchFn(`${this.baseUrl}${job.path}`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(job.body),
          });
        } catch {
          // network failure: keep the job queued and retry
          await sleep(this.retryDelayMs);
          continue;
        }
        this.queue.shift();
        if (resp.ok) {
          job.resolve((await resp.json()) as Ack);
        } else {
          job.reject(new ApiError(resp.status, await describeError(resp)));
        }
      }
    } finally {
      this.pumping = false;
    }
  }
}

async function describeError(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: unknown };
    return typeof body.detail === "string" ? body.detail : JSON.stringify(body);
  } catch {
    return resp.statusText;
  }
}
