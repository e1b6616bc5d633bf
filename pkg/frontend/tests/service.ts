/** Shared helpers: spawn the rating service and build a synthetic session. */
import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { createConnection } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";
import { inflateRawSync } from "node:zlib";

const execFileAsync = promisify(execFile);

export const ADMIN_TOKEN = "test-admin-token";

export interface LiveService {
  baseUrl: string;
  dataDir: string;
  stop(): Promise<void>;
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

export async function startService(): Promise<LiveService> {
  const dataDir = mkdtempSync(join(tmpdir(), "rating-service-"));
  const port = 21000 + Math.floor(Math.random() * 20000);
  const proc: ChildProcess = spawn(
    "python3",
    [
      "-m",
      "lgetools.cli",
      "serve",
      "--data-dir",
      dataDir,
      "--port",
      String(port),
      "--admin-token",
      ADMIN_TOKEN,
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  const baseUrl = `http://127.0.0.1:${port}`;
  let stderr = "";
  proc.stderr?.on("data", (chunk) => {
    stderr += String(chunk);
  });

  for (let attempt = 0; attempt < 200; attempt++) {
    if (proc.exitCode !== null) {
      throw new Error(`service exited early (${proc.exitCode}): ${stderr}`);
    }
    if (await portOpen(port)) break;
    await sleep(100);
  }

  return {
    baseUrl,
    dataDir,
    stop: async () => {
      proc.kill("SIGTERM");
      await sleep(200);
      if (proc.exitCode === null) proc.kill("SIGKILL");
    },
  };
}

function portOpen(port: number): Promise<boolean> {
  return new Promise((resolve) => {
    const socket = createConnection({ host: "127.0.0.1", port, timeout: 300 });
    socket.once("connect", () => {
      socket.destroy();
      resolve(true);
    });
    const fail = () => {
      socket.destroy();
      resolve(false);
    };
    socket.once("error", fail);
    socket.once("timeout", fail);
  });
}

export interface SessionSetup {
  sessionId: string;
  caseIds: string[];
  nSlices: number;
}

/** Three tiny phantom case volumes per arm, one rater, two slices each. */
export async function createThreeCaseSession(service: LiveService): Promise<SessionSetup> {
  const volumesDir = mkdtempSync(join(tmpdir(), "rating-volumes-"));
  const manifest: { patient_id: string; manual_path: string; auto_path: string }[] = [];
  let seed = 0;
  for (let i = 0; i < 3; i++) {
    const pid = `case-${i}`;
    const paths: string[] = [];
    for (const arm of ["manual", "auto"]) {
      const out = join(volumesDir, `${pid}-${arm}`);
      await execFileAsync("python3", [
        "-m",
        "lgetools.cli",
        "phantom",
        "--out",
        out,
        "--seed",
        String(seed++),
        "--dims",
        "16,16,2",
        "--inner-radius",
        "3",
        "--outer-radius",
        "6",
        "--center",
        "7.5,7.5",
        "--wedge",
        "0.0,1.2,0,2",
      ]);
      paths.push(out);
    }
    manifest.push({ patient_id: pid, manual_path: paths[0]!, auto_path: paths[1]! });
  }
  const resp = await fetch(`${service.baseUrl}/sessions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ manifest, raters: ["alice"], overlap_n: 0, seed: 5 }),
  });
  if (!resp.ok) {
    throw new Error(`session creation failed: ${resp.status} ${await resp.text()}`);
  }
  const body = (await resp.json()) as { session_id: string };
  return { sessionId: body.session_id, caseIds: manifest.map((m) => m.patient_id), nSlices: 2 };
}

export async function fetchExport(
  service: LiveService,
  sessionId: string,
): Promise<Map<string, string>> {
  const resp = await fetch(`${service.baseUrl}/sessions/${sessionId}/export`, {
    headers: { "x-admin-token": ADMIN_TOKEN },
  });
  if (!resp.ok) throw new Error(`export failed: ${resp.status}`);
  const blob = Buffer.from(await resp.arrayBuffer());
  return unzipStored(blob);
}

/**
 * Minimal zip reader for the export bundle (works for both stored and
 * deflated entries using node's zlib).
 */
function unzipStored(buffer: Buffer): Map<string, string> {
  const files = new Map<string, string>();
  let offset = 0;
  while (offset + 4 <= buffer.length && buffer.readUInt32LE(offset) === 0x04034b50) {
    const method = buffer.readUInt16LE(offset + 8);
    const compressedSize = buffer.readUInt32LE(offset + 18);
    const nameLength = buffer.readUInt16LE(offset + 26);
    const extraLength = buffer.readUInt16LE(offset + 28);
    const name = buffer.subarray(offset + 30, offset + 30 + nameLength).toString("utf-8");
    const dataStart = offset + 30 + nameLength + extraLength;
    const data = buffer.subarray(dataStart, dataStart + compressedSize);
    const content = method === 0 ? data : inflateRawSync(data);
    files.set(name, content.toString("utf-8"));
    offset = dataStart + compressedSize;
  }
  return files;
}

export function parseCsv(text: string): Record<string, string>[] {
  const lines = text.split("\n").filter((line) => line.length > 0);
  if (lines.length === 0) return [];
  const header = lines[0]!.split(",");
  return lines.slice(1).map((line) => {
    const cells = line.split(",");
    const row: Record<string, string> = {};
    header.forEach((column, i) => {
      row[column] = cells[i] ?? "";
    });
    return row;
  });
}
