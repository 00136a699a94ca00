/** Animation view-model for spatial frame sequences.
 *
 * The value grid and its reliability twin render side by side under a
 * shared time cursor. The color ramp is fixed once per sequence from the
 * manifest min/max, so colors stay comparable while frames advance.
 */

import { FramesPayload } from "./types.js";

export interface ScrubberModel {
  length: number;
  timestamps: string[];
}

export function scrubberModel(payload: FramesPayload): ScrubberModel {
  return {
    length: payload.frames.length,
    timestamps: payload.frames.map(f => f.ts),
  };
}

/** Playback state machine; pure, so it is testable without a DOM. */
export class AnimationModel {
  index = 0;
  playing = false;

  constructor(public readonly length: number) {}

  seek(i: number): number {
    if (this.length === 0) {
      this.index = 0;
      return 0;
    }
    this.index = Math.min(Math.max(0, Math.floor(i)), this.length - 1);
    return this.index;
  }

  step(delta: number): number {
    if (this.length === 0) return 0;
    this.index = (this.index + delta % this.length + this.length) % this.length;
    return this.index;
  }

  /** Advance one frame while playing; wraps at the end. */
  tick(): number {
    if (this.playing) this.step(1);
    return this.index;
  }

  toggle(): boolean {
    this.playing = !this.playing;
    return this.playing;
  }
}

// Perceptually ordered dark-blue -> green -> yellow ramp anchors.
const RAMP: [number, number, number][] = [
  [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
];

/** Color mapping pinned to the sequence-wide [vmin, vmax] range. */
export function colorRamp(vmin: number, vmax: number): (v: number) => string {
  const span = vmax > vmin ? vmax - vmin : 1;
  return v => {
    const t = Math.min(Math.max((v - vmin) / span, 0), 1);
    const pos = t * (RAMP.length - 1);
    const i = Math.min(Math.floor(pos), RAMP.length - 2);
    const f = pos - i;
    const [r1, g1, b1] = RAMP[i];
    const [r2, g2, b2] = RAMP[i + 1];
    const r = Math.round(r1 + (r2 - r1) * f);
    const g = Math.round(g1 + (g2 - g1) * f);
    const b = Math.round(b1 + (b2 - b1) * f);
    return `rgb(${r},${g},${b})`;
  };
}

/** Grey ramp for the reliability field (0 dark, 1 light). */
export function reliabilityColor(r: number): string {
  const level = Math.round(40 + Math.min(Math.max(r, 0), 1) * 195);
  return `rgb(${level},${level},${level})`;
}
