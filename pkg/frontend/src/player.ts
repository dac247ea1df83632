// Playback clock for a loaded log.  Wall time scaled by the speed factor
// maps onto log time; each render picks the nearest recorded frame, no
// interpolation.  Kept free of DOM and timers so it can be driven by
// synthetic ticks in tests.

import type { LogFrame, SimLog } from './simlog.js';

export const PLAYBACK_SPEEDS = [0.25, 0.5, 1, 2, 4] as const;

export class Player {
  log: SimLog | null = null;
  playing = false;
  speed = 1;

  private logTime = 0;
  private index = 0;

  load(log: SimLog): void {
    this.log = log;
    this.logTime = 0;
    this.index = 0;
    this.playing = false;
  }

  get frameIndex(): number {
    return this.index;
  }

  get frameCount(): number {
    return this.log === null ? 0 : this.log.frames.length;
  }

  get frame(): LogFrame | null {
    if (this.log === null || this.log.frames.length === 0) {
      return null;
    }
    return this.log.frames[this.index] ?? null;
  }

  get duration(): number {
    if (this.log === null || this.log.frames.length === 0) {
      return 0;
    }
    return (this.log.frames.length - 1) * this.log.header.dt;
  }

  setSpeed(speed: number): void {
    if (!(PLAYBACK_SPEEDS as readonly number[]).includes(speed)) {
      throw new Error(`speed must be one of ${PLAYBACK_SPEEDS.join(', ')}`);
    }
    this.speed = speed;
  }

  play(): void {
    if (this.log === null || this.log.frames.length === 0) {
      return;
    }
    // Pressing play at the end restarts from the top.
    if (this.index >= this.log.frames.length - 1) {
      this.logTime = 0;
      this.index = 0;
    }
    this.playing = true;
  }

  pause(): void {
    this.playing = false;
  }

  // Advance by a wall-clock interval in seconds.  Returns the frame index
  // after the step so callers can redraw only when it changed.
  tick(wallDelta: number): number {
    if (!this.playing || this.log === null || this.log.frames.length === 0) {
      return this.index;
    }
    this.logTime += wallDelta * this.speed;
    const last = this.log.frames.length - 1;
    const dt = this.log.header.dt;
    let next = Math.round(this.logTime / dt);
    if (next >= last) {
      next = last;
      this.logTime = last * dt;
      this.playing = false;
    }
    this.index = next < 0 ? 0 : next;
    return this.index;
  }

  scrubTo(frameIndex: number): void {
    if (this.log === null || this.log.frames.length === 0) {
      return;
    }
    const last = this.log.frames.length - 1;
    const clamped = Math.min(Math.max(Math.trunc(frameIndex), 0), last);
    this.index = clamped;
    this.logTime = clamped * this.log.header.dt;
  }
}
