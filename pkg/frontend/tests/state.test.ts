import assert from "node:assert/strict";
import { test } from "node:test";

import {
  AGG_BINS,
  AGG_STATS,
  PRODUCTS,
  SeriesSelection,
  UiQueryState,
  decodeState,
  defaultState,
  encodeState,
  responseKey,
  toRequests,
  validateState,
} from "../src/state.js";

// deterministic xorshift so the 200 random states are reproducible
function rng(seed: number): () => number {
  let x = seed >>> 0 || 1;
  return () => {
    x ^= x << 13; x >>>= 0;
    x ^= x >> 17;
    x ^= x << 5; x >>>= 0;
    return x / 0xffffffff;
  };
}

function randomState(r: () => number): UiQueryState {
  const series: SeriesSelection[] = [];
  const n = 1 + Math.floor(r() * 4);
  for (let i = 0; i < n; i++) {
    if (r() < 0.5) {
      series.push({ kind: "channel", channelId: `dep${i}.n${Math.floor(r() * 20)}:air_temp` });
    } else {
      series.push({
        kind: "derived",
        product: PRODUCTS[Math.floor(r() * PRODUCTS.length)],
        target: `site-${Math.floor(r() * 9)}`,
      });
    }
  }
  const day = 1 + Math.floor(r() * 27);
  const pad = (v: number) => String(v).padStart(2, "0");
  return {
    series,
    fromUtc: `2024-03-${pad(day)}T00:00:00Z`,
    toUtc: `2024-04-${pad(day)}T12:30:00Z`,
    todWindow: r() < 0.5 ? null
      : { start: Math.floor(r() * 1440), end: Math.floor(r() * 1440) },
    parMin: { enabled: r() < 0.5, value: Math.floor(r() * 2000) },
    excludeFlagged: r() < 0.5,
    agg: r() < 0.3 ? null : {
      bin: AGG_BINS[Math.floor(r() * AGG_BINS.length)],
      stat: AGG_STATS[Math.floor(r() * AGG_STATS.length)],
    },
  };
}

test("url round trip holds for 200 randomized states", () => {
  const r = rng(20240305);
  for (let i = 0; i < 200; i++) {
    const state = randomState(r);
    const decoded = decodeState(encodeState(state));
    assert.deepEqual(decoded, state, `state #${i}`);
  }
});

test("default state round trips too", () => {
  const state = defaultState();
  assert.deepEqual(decodeState(encodeState(state)), state);
});

test("encoding is stable (idempotent re-encode)", () => {
  const r = rng(7);
  for (let i = 0; i < 50; i++) {
    const encoded = encodeState(randomState(r));
    assert.equal(encodeState(decodeState(encoded)), encoded);
  }
});

test("requests mirror the service parameter sets", () => {
  const state: UiQueryState = {
    series: [
      { kind: "channel", channelId: "a.n01:air_temp" },
      { kind: "channel", channelId: "b.n02:air_temp" },
      { kind: "derived", product: "ndvi", target: "towerA" },
      { kind: "derived", product: "ndvi", target: "towerB" },
      { kind: "derived", product: "lai", target: "u.n05" },
    ],
    fromUtc: "2024-03-01T00:00:00Z",
    toUtc: "2024-03-31T00:00:00Z",
    todWindow: { start: 600, end: 840 },
    parMin: { enabled: true, value: 900 },
    excludeFlagged: true,
    agg: { bin: "day", stat: "mean" },
  };
  const requests = toRequests(state);
  assert.equal(requests.length, 3);

  const data = requests.find(r => r.path === "/v1/data")!;
  assert.deepEqual(data.params.filter(([k]) => k === "channel").map(([, v]) => v),
                   ["a.n01:air_temp", "b.n02:air_temp"]);
  const shared = Object.fromEntries(data.params.filter(([k]) => k !== "channel"));
  assert.deepEqual(shared, {
    from: "2024-03-01T00:00:00Z", to: "2024-03-31T00:00:00Z",
    tod: "600-840", par_min: "900", agg: "day:mean",
  });

  const ndvi = requests.find(r => r.path === "/v1/derived/ndvi")!;
  assert.deepEqual(ndvi.params.filter(([k]) => k === "target").map(([, v]) => v),
                   ["towerA", "towerB"]);
  const lai = requests.find(r => r.path === "/v1/derived/lai")!;
  assert.deepEqual(lai.params.filter(([k]) => k === "target").map(([, v]) => v),
                   ["u.n05"]);
});

test("keep-all flags and no aggregation encode explicitly", () => {
  const state = { ...defaultState(), excludeFlagged: false, agg: null,
                  series: [{ kind: "channel", channelId: "x:y" } as SeriesSelection] };
  const [req] = toRequests(state);
  const flat = Object.fromEntries(req.params);
  assert.equal(flat["exclude_flags"], "none");
  assert.ok(!("agg" in flat));
});

test("inverted range is caught before any request is built", () => {
  const bad = { ...defaultState(),
                series: [{ kind: "channel", channelId: "x:y" } as SeriesSelection],
                fromUtc: "2024-05-01T00:00:00Z", toUtc: "2024-04-01T00:00:00Z" };
  const message = validateState(bad);
  assert.ok(message !== null && message.includes("inverted"));
  assert.equal(validateState(defaultState()), "Select at least one series.");
  const good = { ...defaultState(),
                 series: [{ kind: "channel", channelId: "x:y" } as SeriesSelection] };
  assert.equal(validateState(good), null);
});

test("response keys address the payload map", () => {
  assert.equal(responseKey({ kind: "channel", channelId: "a:b" }), "a:b");
  assert.equal(responseKey({ kind: "derived", product: "ndvi", target: "t1" }),
               "derived:ndvi:t1");
});
