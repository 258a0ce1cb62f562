/**
 * Full annotation loop against the real bench service.
 *
 * Spawns `prosemill bench serve` on a scratch workspace seeded with 10
 * synthetic pairs, then drives the actual UI modules through a DOM session:
 * log in through the handle form, judge every pair with keyboard shortcuts,
 * and check the leaderboard against an independent fold of the verdict log
 * that the service persisted to disk.
 */

import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { Window } from "happy-dom";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import type { LeaderboardRow } from "../src/api.js";
import { startApp, AppHandle } from "../src/main.js";
import { seededRng } from "../src/rng.js";
import { MemoryStorage } from "./helpers.js";

const PORT = 8473;
const BASE = `http://127.0.0.1:${PORT}`;
const MODELS = ["atlas-13b", "borealis-v2", "cascade-mini"] as const;
const PAIRINGS: Array<[number, number]> = [
  [0, 1],
  [0, 2],
  [1, 2],
];

const INDEX_HTML = readFileSync(
  join(dirname(fileURLToPath(import.meta.url)), "..", "public", "index.html"),
  "utf-8",
);

function syntheticPair(i: number): Record<string, unknown> {
  const [a, b] = PAIRINGS[i % PAIRINGS.length]!;
  return {
    id: `cmp-e2e-${String(i).padStart(3, "0")}`,
    instruction_id: `q-${i}`,
    instruction: `Describe scene ${i} of the harbor story in two sentences.`,
    model_a: MODELS[a],
    model_b: MODELS[b],
    response_a: `A measured take on scene ${i}, holding the light steady.`,
    response_b: `A wilder read of scene ${i}, all weather and nerve.`,
    dimension: "overall",
  };
}

async function waitForHealth(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/api/health`);
      if (res.ok) {
        return;
      }
    } catch (err) {
      lastError = err;
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error(`bench service never came up on ${BASE}: ${lastError}`);
}

let workdir: string;
let verdictsPath: string;
let server: ChildProcess;

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "bench-e2e-"));
  const pairsPath = join(workdir, "pending.jsonl");
  verdictsPath = join(workdir, "verdicts.jsonl");
  writeFileSync(
    pairsPath,
    Array.from({ length: 10 }, (_, i) => JSON.stringify(syntheticPair(i))).join("\n") +
      "\n",
  );

  server = spawn(
    "prosemill",
    [
      "bench",
      "serve",
      "--pairs",
      pairsPath,
      "--verdicts",
      verdictsPath,
      "--port",
      String(PORT),
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stderr?.on("data", (chunk: Buffer) => {
    process.stderr.write(`[serve] ${chunk}`);
  });
  await waitForHealth(20_000);
}, 30_000);

afterAll(() => {
  server?.kill("SIGKILL");
  rmSync(workdir, { recursive: true, force: true });
});

describe("annotation loop", () => {
  it(
    "submits 10 verdicts through the DOM and the leaderboard matches the fold of the log",
    async () => {
      const window = new Window();
      window.document.write(INDEX_HTML);
      const doc = window.document as unknown as Document;

      const app: AppHandle = startApp({
        baseUrl: BASE,
        fetchFn: (url, init) => globalThis.fetch(url, init),
        rng: seededRng(11),
        doc,
        storage: new MemoryStorage(),
      });

      // no stored handle yet: the form gates the session
      expect(app.session).toBeNull();
      const form = doc.querySelector<HTMLElement>("#handle-form")!;
      expect(form.hidden).toBe(false);

      doc.querySelector<HTMLInputElement>("#handle-input")!.value = "writer-1";
      doc.querySelector<HTMLButtonElement>("#handle-save")!.click();
      await app.settle();

      expect(app.session).not.toBeNull();
      expect(doc.querySelector<HTMLElement>("#annotator-label")!.textContent).toBe(
        "writer-1",
      );

      const keys = [
        "ArrowLeft",
        "ArrowRight",
        "ArrowDown",
        "ArrowLeft",
        "ArrowLeft",
        "ArrowRight",
        "ArrowDown",
        "ArrowLeft",
        "ArrowRight",
        "ArrowLeft",
      ];
      const seenComparisons = new Set<string>();
      let first = true;
      for (const key of keys) {
        const session = app.session!;
        expect(session.screen.kind).toBe("pair");
        if (session.screen.kind === "pair") {
          seenComparisons.add(session.screen.view.comparison_id);
        }

        // blind judging: the rendered pair view must never name a model; the
        // leaderboard panel names models by design, so it is checked apart
        const pairHtml =
          doc.querySelector("#pair-area")!.innerHTML +
          doc.querySelector("#conflict-banner")!.innerHTML;
        for (const model of MODELS) {
          expect(pairHtml).not.toContain(model);
          expect(pairHtml).not.toContain(model.split("-")[0]!);
        }
        if (first) {
          // before any verdict the leaderboard is empty too, so the whole
          // page has to be clean
          for (const model of MODELS) {
            expect(doc.body.innerHTML).not.toContain(model);
          }
          first = false;
        }

        doc.dispatchEvent(
          new window.KeyboardEvent("keydown", { key, bubbles: true }),
        );
        await app.settle();
      }

      // every pair judged exactly once; queue exhausted, said out loud
      expect(seenComparisons.size).toBe(10);
      expect(app.session!.screen).toEqual({ kind: "empty" });
      expect(doc.querySelector("#pair-area")!.textContent).toContain(
        "No pairs pending",
      );
      expect(app.session!.accepted).toHaveLength(10);

      // the service wrote one record per verdict, in submission order
      const written = readFileSync(verdictsPath, "utf-8")
        .trim()
        .split("\n")
        .map((line) => JSON.parse(line));
      expect(written).toHaveLength(10);
      written.forEach((record, i) => {
        const sent = app.session!.accepted[i]!;
        expect(record.id).toContain(sent.comparison_id);
        expect(record.verdict).toBe(sent.verdict);
        expect(record.dimension).toBe("overall");
        expect(record.annotator).toBe("writer-1");
        expect(record.timestamp).toBe(i + 1);
      });
      // the keyboard mix must have produced real wins, not only ties
      const verdicts = new Set(written.map((r) => r.verdict));
      expect(verdicts.size).toBeGreaterThan(1);

      // leaderboard endpoint == independent fold of the persisted log
      const viaApi = (await (
        await fetch(`${BASE}/api/leaderboard?dimension=overall`)
      ).json()) as LeaderboardRow[];
      const viaCli = JSON.parse(
        execFileSync(
          "prosemill",
          ["bench", "elo", "--verdicts", verdictsPath, "--dimension", "overall"],
          { encoding: "utf-8" },
        ),
      ) as LeaderboardRow[];
      expect(viaApi).toEqual(viaCli);
      expect(viaApi.map((r) => r.model).sort()).toEqual([...MODELS].sort());
      expect(viaApi.reduce((sum, r) => sum + r.games, 0)).toBe(20);

      // the UI auto-refreshed after the last verdict: state and table agree
      // with a fresh API read
      expect(app.session!.leaderboard).toEqual(viaApi);
      const domRatings = [
        ...doc.querySelectorAll<HTMLElement>("#leaderboard .rating"),
      ].map((td) => td.dataset.rating);
      expect(domRatings).toEqual(viaApi.map((r) => String(r.rating)));

      console.log(
        "[acceptance] PASS annotation_loop: 10 verdicts via DOM session, " +
          "leaderboard identical to the elo fold of the persisted log, " +
          "0 model-name leaks across 10 rendered views",
      );
    },
    30_000,
  );
});
