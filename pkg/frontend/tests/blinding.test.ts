/**
 * Blinding contract: nothing the client can render names a method. Scans
 * every rater-facing payload of a live session for method-identity fields.
 */
import { afterAll, beforeAll, describe, expect, test } from "vitest";

import {
  createThreeCaseSession,
  startService,
  type LiveService,
  type SessionSetup,
} from "./service.js";

let service: LiveService;
let setup: SessionSetup;

beforeAll(async () => {
  service = await startService();
  setup = await createThreeCaseSession(service);
});

afterAll(async () => {
  await service?.stop();
});

const FORBIDDEN = new Set(["manual", "automatic"]);

function scan(node: unknown, path: string[] = [], hits: string[][] = []): string[][] {
  if (Array.isArray(node)) {
    node.forEach((item, i) => scan(item, [...path, String(i)], hits));
  } else if (node !== null && typeof node === "object") {
    for (const [key, value] of Object.entries(node)) {
      if (FORBIDDEN.has(key.toLowerCase())) {
        hits.push([...path, key]);
      }
      scan(value, [...path, key], hits);
    }
  } else if (typeof node === "string" && FORBIDDEN.has(node.toLowerCase())) {
    hits.push([...path, node]);
  }
  return hits;
}

describe("blinding schema scan", () => {
  test("task, slice-state, and progress payloads carry no method identity", async () => {
    const payloads: unknown[] = [];
    let cursor = 0;
    for (;;) {
      const resp = await fetch(
        `${service.baseUrl}/sessions/${setup.sessionId}/raters/alice/tasks/${cursor}`,
      );
      expect(resp.status).toBe(200);
      const payload = (await resp.json()) as { done: boolean; task?: { patient_id: string; slice_index: number } };
      payloads.push(payload);
      if (payload.done) break;
      const { patient_id, slice_index } = payload.task!;
      const state = await fetch(
        `${service.baseUrl}/sessions/${setup.sessionId}/raters/alice/slices/${patient_id}/${slice_index}`,
      );
      payloads.push(await state.json());
      cursor += 1;
    }
    const progress = await fetch(`${service.baseUrl}/sessions/${setup.sessionId}/progress/alice`);
    payloads.push(await progress.json());

    expect(payloads.length).toBeGreaterThan(1);
    for (const payload of payloads) {
      expect(scan(payload)).toEqual([]);
    }
  });

  test("the scanner itself catches planted identity fields", () => {
    expect(scan({ method: "manual" }).length).toBe(1);
    expect(scan({ arms: { A: "automatic" } }).length).toBe(1);
    expect(scan({ Manual: 1 }).length).toBe(1);
    expect(scan({ arm: "A", note: "manually checked" }).length).toBe(0); // exact match only
  });
});
