/**
 * Rating flow state machine, independent of the DOM.
 *
 * The server is the source of truth: navigating to a cursor re-fetches the
 * task and this rater's prior submissions, so refreshing or going back loses
 * nothing and prior choices are shown for revision. Overlay visibility is
 * the only purely local state.
 */
import { ApiClient, ApiError } from "./api.js";
import type {
  Arm,
  ComparisonChoice,
  Progress,
  RatingCategory,
  SliceState,
  Task,
  TargetClass,
} from "./types.js";
import { emptySliceState } from "./types.js";

export type Screen = "loading" | "rating" | "done";

export type ComparisonStatus =
  | "pending-arms" // at least one arm not rated yet for this class
  | "excluded" // both arms true_negative: auto-skipped
  | "open" // ready for a verdict
  | "submitted";

export interface AppState {
  screen: Screen;
  cursor: number;
  task: Task | null;
  progress: Progress;
  classTab: TargetClass;
  slice: SliceState;
  overlayVisible: boolean;
  notice: string | null;
}

export class RaterApp {
  state: AppState = {
    screen: "loading",
    cursor: 0,
    task: null,
    progress: { position: 0, total: 0 },
    classTab: "scar",
    slice: emptySliceState(),
    overlayVisible: true,
    notice: null,
  };

  onChange: (state: AppState) => void = () => {};

  constructor(
    readonly api: ApiClient,
    readonly sessionId: string,
    readonly raterId: string,
  ) {}

  private emit(): void {
    this.onChange(this.state);
  }

  async start(cursor = 0): Promise<void> {
    await this.goTo(cursor);
  }

  async goTo(cursor: number): Promise<void> {
    if (cursor < 0) return;
    this.state = { ...this.state, screen: "loading", notice: null };
    this.emit();
    const payload = await this.api.getTask(this.sessionId, this.raterId, cursor);
    if (payload.done) {
      this.state = {
        ...this.state,
        screen: "done",
        cursor,
        task: null,
        progress: payload.progress,
        slice: emptySliceState(),
      };
      this.emit();
      return;
    }
    const task = payload.task!;
    const slice = await this.api.getSliceState(
      this.sessionId,
      this.raterId,
      task.patient_id,
      task.slice_index,
    );
    this.state = {
      ...this.state,
      screen: "rating",
      cursor,
      task,
      progress: payload.progress,
      slice,
      classTab: this.state.classTab,
      notice: null,
    };
    this.emit();
  }

  async next(): Promise<void> {
    await this.goTo(this.state.cursor + 1);
  }

  async prev(): Promise<void> {
    if (this.state.cursor > 0) {
      await this.goTo(this.state.cursor - 1);
    }
  }

  setClassTab(cls: TargetClass): void {
    this.state = { ...this.state, classTab: cls };
    this.emit();
  }

  /** Local only: never touches the network. */
  toggleOverlay(): void {
    this.state = { ...this.state, overlayVisible: !this.state.overlayVisible };
    this.emit();
  }

  async rate(cls: TargetClass, arm: Arm, category: RatingCategory): Promise<void> {
    const task = this.state.task;
    if (!task) return;
    await this.api.submitRating(this.sessionId, {
      rater_id: this.raterId,
      patient_id: task.patient_id,
      slice_index: task.slice_index,
      target_class: cls,
      arm,
      category,
    });
    const ratings = {
      ...this.state.slice.ratings,
      [cls]: { ...this.state.slice.ratings[cls], [arm]: category },
    };
    this.state = { ...this.state, slice: { ...this.state.slice, ratings } };
    this.emit();
  }

  comparisonStatus(cls: TargetClass): ComparisonStatus {
    const pair = this.state.slice.ratings[cls];
    if (pair.A === null || pair.B === null) return "pending-arms";
    if (pair.A === "true_negative" && pair.B === "true_negative") return "excluded";
    if (this.state.slice.comparisons[cls] !== null) return "submitted";
    return "open";
  }

  async compare(cls: TargetClass, choice: ComparisonChoice): Promise<boolean> {
    const task = this.state.task;
    if (!task) return false;
    const status = this.comparisonStatus(cls);
    if (status === "excluded") {
      this.state = {
        ...this.state,
        notice: `${cls}: slice excluded from comparison (both arms true negative)`,
      };
      this.emit();
      return false;
    }
    if (status === "pending-arms") {
      this.state = { ...this.state, notice: `${cls}: rate both arms before comparing` };
      this.emit();
      return false;
    }
    try {
      await this.api.submitComparison(this.sessionId, {
        rater_id: this.raterId,
        patient_id: task.patient_id,
        slice_index: task.slice_index,
        target_class: cls,
        choice,
      });
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // server-side eligibility is authoritative; surface, don't crash
        this.state = { ...this.state, notice: `${cls}: ${err.detail}` };
        this.emit();
        return false;
      }
      throw err;
    }
    const comparisons = { ...this.state.slice.comparisons, [cls]: choice };
    this.state = {
      ...this.state,
      slice: { ...this.state.slice, comparisons },
      notice: null,
    };
    this.emit();
    return true;
  }

  /** Keyboard shortcuts: 1 -> A, 2 -> B, 3 -> equally good. */
  async handleKey(key: string): Promise<void> {
    const mapping: Record<string, ComparisonChoice> = { "1": "A", "2": "B", "3": "equal" };
    const choice = mapping[key];
    if (choice !== undefined && this.state.screen === "rating") {
      await this.compare(this.state.classTab, choice);
    }
  }
}
