// Speaking-mouth loop: while the robot talks, the mouth height oscillates
// around its current value at the theme cadence, clamped inside (0, 12].
// A batch that moves the mouth wins: the oscillation pauses for the tween
// and re-centers on the batch's target afterwards. Turning speaking off
// restores the base height.

import type { RenderedFace } from "./face.js";
import { theme } from "./theme.js";

export class SpeakingMouth {
  private face: RenderedFace;
  private active = false;
  private baseHeight = 0;
  private startMs = 0;

  constructor(face: RenderedFace) {
    this.face = face;
    face.onMouthHeightSet((height) => {
      this.baseHeight = height; // batch target wins; oscillation re-centers
    });
  }

  get isSpeaking(): boolean {
    return this.active;
  }

  on(nowMs: number): void {
    if (this.active) return;
    this.active = true;
    this.baseHeight = this.face.values.mouth.height;
    this.startMs = nowMs;
  }

  off(): void {
    if (!this.active) return;
    this.active = false;
    this.face.writeMouthHeight(this.baseHeight);
  }

  tick(nowMs: number): void {
    if (!this.active) return;
    if (this.face.mouthHeightTweenActive()) return; // the batch owns the mouth
    const { frequencyHz, amplitudeVmin, minHeightVmin, maxHeightVmin } = theme.speaking;
    const amplitude = Math.max(
      Math.min(amplitudeVmin, maxHeightVmin - this.baseHeight, this.baseHeight - minHeightVmin),
      0,
    );
    const phase = ((nowMs - this.startMs) / 1000) * frequencyHz * 2 * Math.PI;
    this.face.writeMouthHeight(this.baseHeight + amplitude * Math.sin(phase));
  }
}
