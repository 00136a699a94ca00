import assert from "node:assert/strict";
import { test } from "node:test";

import { AnimationModel, colorRamp, reliabilityColor, scrubberModel } from "../src/frames.js";
import { FramesPayload } from "../src/types.js";

function payload(n: number): FramesPayload {
  return {
    deployment: "d", variable: "air_temp_C",
    grid: { nx: 2, ny: 2, origin_x: 0, origin_y: 0, cell_size: 1 },
    vmin: 10, vmax: 30,
    frames: Array.from({ length: n }, (_, i) => ({
      ts: `2024-03-01T${String(i).padStart(2, "0")}:00:00Z`,
      values: [[10, 20], [null, 30]],
      reliability: [[1, 1], [0, 0.5]],
    })),
  };
}

test("scrubber length equals frame count", () => {
  for (const n of [0, 1, 24]) {
    const model = scrubberModel(payload(n));
    assert.equal(model.length, n);
    assert.equal(model.timestamps.length, n);
  }
});

test("seek clamps, step wraps, tick advances only while playing", () => {
  const anim = new AnimationModel(24);
  assert.equal(anim.seek(99), 23);
  assert.equal(anim.seek(-5), 0);
  assert.equal(anim.step(-1), 23);           // wraps backwards
  assert.equal(anim.step(1), 0);
  assert.equal(anim.tick(), 0);              // paused: no motion
  anim.toggle();
  assert.equal(anim.tick(), 1);
  anim.seek(23);
  assert.equal(anim.tick(), 0);              // wraps forwards
});

test("zero-length animation never moves", () => {
  const anim = new AnimationModel(0);
  assert.equal(anim.seek(3), 0);
  assert.equal(anim.step(1), 0);
});

test("color ramp is pinned to the manifest range and clamps outside it", () => {
  const ramp = colorRamp(10, 30);
  assert.equal(ramp(10), "rgb(68,1,84)");
  assert.equal(ramp(30), "rgb(253,231,37)");
  assert.equal(ramp(-100), ramp(10));
  assert.equal(ramp(999), ramp(30));
  // same input, same color across frames: the ramp is a pure function
  assert.equal(ramp(17.3), ramp(17.3));
});

test("degenerate range still yields a color", () => {
  const flat = colorRamp(5, 5);
  assert.match(flat(5), /^rgb\(\d+,\d+,\d+\)$/);
});

test("reliability greyscale is monotone", () => {
  const shades = [0, 0.25, 0.5, 0.75, 1].map(r =>
    Number(reliabilityColor(r).match(/\d+/)![0]));
  for (let i = 1; i < shades.length; i++) assert.ok(shades[i] > shades[i - 1]);
});
