// @vitest-environment node
// End-to-end review loop (acceptance A9): relabel one FUND draft to UNI in
// the client, export, and verify that decision-log replay reproduces the
// export byte-for-byte. Requires the Python package; skipped when absent.
import { spawn, spawnSync } from "node:child_process";
import type { ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { DecisionManager } from "../src/decisions.js";
import { computeProgress, totalDrafts } from "../src/dashboard.js";

const pythonOk = spawnSync("python3", ["-c", "import acklab"]).status === 0;

const DRAFTS = {
  scheme: "BIOES",
  documents: [
    {
      doc_id: "d0",
      tokens: "Funded by German Research Foundation under grant 01PQ23008 .".split(" "),
      drafts: [
        { id: "d0-fund", start: 2, end: 5, label: "FUND", source: "rule", status: "proposed" },
        { id: "d0-grnb", start: 7, end: 8, label: "GRNB", source: "wos-grant-index",
          status: "proposed" },
      ],
      decisions: [],
    },
    {
      doc_id: "d1",
      tokens: "We thank Jana Kovarova for comments .".split(" "),
      drafts: [
        { id: "d1-ind", start: 2, end: 4, label: "IND", source: "pretrained-per",
          status: "proposed" },
      ],
      decisions: [],
    },
  ],
  conflicts: [],
  unaligned: [],
};

const port = 20000 + Math.floor(Math.random() * 20000);
const base = `http://127.0.0.1:${port}`;
let proc: ChildProcess | null = null;
let workDir = "";

function startServer(): Promise<ChildProcess> {
  const child = spawn("python3", [
    "-m", "acklab.cli", "review-serve",
    "--drafts", join(workDir, "drafts.json"),
    "--log", join(workDir, "decisions.ndjson"),
    "--bind", `127.0.0.1:${port}`,
  ], { stdio: "ignore" });
  return waitForHealth().then(() => child);
}

async function waitForHealth(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${base}/health`);
      if (resp.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error("review service did not come up");
}

function stopServer(child: ChildProcess): Promise<void> {
  return new Promise((resolve) => {
    child.once("exit", () => resolve());
    child.kill("SIGTERM");
  });
}

afterAll(async () => {
  if (proc && proc.exitCode === null) await stopServer(proc);
});

describe.skipIf(!pythonOk)("review loop against the real service", () => {
  it("relabels FUND to UNI, exports, and replays byte-for-byte", async () => {
    workDir = mkdtempSync(join(tmpdir(), "acklab-ui-"));
    writeFileSync(join(workDir, "drafts.json"), JSON.stringify(DRAFTS));
    proc = await startServer();

    const api = new ApiClient(base);
    const documents = await api.listDocuments();
    expect(documents.map((d) => d.doc_id)).toEqual(["d0", "d1"]);

    // Drive decisions through the same manager the UI uses.
    const manager = new DecisionManager(api);
    let snapshot = await api.getDocument("d0");
    snapshot = await manager.submit(snapshot, {
      action: "relabel", draft_id: "d0-fund", new_label: "UNI", version: snapshot.version,
    }, () => undefined);
    expect(snapshot.version).toBe(2);
    expect(snapshot.drafts.find((d) => d.id === "d0-fund")?.status).toBe("relabeled");
    snapshot = await manager.submit(snapshot, {
      action: "accept", draft_id: "d0-grnb", version: snapshot.version,
    }, () => undefined);
    let d1 = await api.getDocument("d1");
    await manager.submit(d1, {
      action: "accept", draft_id: "d1-ind", version: d1.version,
    }, () => undefined);

    const exported = await api.exportConll();
    expect(exported).toContain("German\tB-UNI");
    expect(exported).toContain("Research\tI-UNI");
    expect(exported).toContain("Foundation\tE-UNI");
    expect(exported).toContain("01PQ23008\tS-GRNB");
    expect(exported).not.toContain("FUND");

    // Dashboard totals match the server's aggregates.
    const progressResp = await fetch(`${base}/progress`);
    const serverCounts = await progressResp.json() as Record<string, Record<string, number>>;
    const clientCounts = computeProgress(await api.listDocuments());
    expect(clientCounts).toEqual(serverCounts);
    expect(totalDrafts(clientCounts)).toBe(3);

    // Restart from the same drafts + decision log: replay must reproduce
    // the export exactly.
    await stopServer(proc);
    proc = await startServer();
    const replayed = await api.exportConll();
    expect(replayed).toBe(exported);
    const health = await api.health();
    expect(health.decisions).toBe(3);
  }, 60000);
});
