// RenderedFace: owns the value model, animates command batches over their
// durations, and projects values into element styles. The renderer never
// originates face changes on its own; the only exception is the speaking
// mouth oscillation, which lives in speaking.ts and re-centers on whatever
// a batch last set.

import { ease } from "./easing.js";
import type { CommandBatch, ElementName, RendererCommand } from "./protocol.js";
import { theme } from "./theme.js";
import {
  ELEMENT_PROPERTIES,
  FaceValues,
  ValueKind,
  cloneValues,
  getValue,
  interpolate,
  kindOf,
  neutralFaceValues,
  setValue,
} from "./values.js";

export interface BatchAck {
  batch_id: number;
  ok: boolean;
  reason?: string;
}

interface Tween {
  target: ElementName;
  property: string;
  kind: ValueKind;
  from: number | string;
  to: number | string;
  startMs: number;
  durationMs: number;
  easing: RendererCommand["easing"];
  done: boolean;
}

interface ActiveBatch {
  id: number;
  tweens: Tween[];
  resolve: (ack: BatchAck) => void;
}

export type ElementStyles = Partial<Record<ElementName, HTMLElement>>;

export class RenderedFace {
  readonly values: FaceValues;
  private batches: ActiveBatch[] = [];
  private elements: ElementStyles;
  private mouthHeightListener: ((height: number) => void) | null = null;

  constructor(elements: ElementStyles = {}) {
    this.values = neutralFaceValues();
    this.elements = elements;
    this.projectAll();
  }

  currentValues(): FaceValues {
    return cloneValues(this.values);
  }

  onMouthHeightSet(listener: (height: number) => void): void {
    this.mouthHeightListener = listener;
  }

  mouthHeightTweenActive(): boolean {
    return this.batches.some((b) =>
      b.tweens.some((t) => !t.done && t.target === "mouth" && t.property === "height"),
    );
  }

  /** Validate and start animating a batch; resolves once every command landed. */
  applyBatch(batch: CommandBatch, nowMs: number): Promise<BatchAck> {
    for (const command of batch.commands) {
      const allowed = ELEMENT_PROPERTIES[command.target];
      if (!allowed) {
        return Promise.resolve({
          batch_id: batch.batch_id,
          ok: false,
          reason: `unknown target '${command.target}'`,
        });
      }
      if (!allowed.has(command.property)) {
        return Promise.resolve({
          batch_id: batch.batch_id,
          ok: false,
          reason: `unknown property '${command.property}' for ${command.target}`,
        });
      }
    }
    if (batch.commands.length === 0) {
      return Promise.resolve({ batch_id: batch.batch_id, ok: true });
    }
    const tweens: Tween[] = batch.commands.map((command) => ({
      target: command.target,
      property: command.property,
      kind: kindOf(command.property),
      from: getValue(this.values, command.target, command.property),
      to: command.value,
      startMs: nowMs,
      durationMs: Math.max(command.duration_ms, 1),
      easing: command.easing,
      done: false,
    }));
    return new Promise((resolve) => {
      this.batches.push({ id: batch.batch_id, tweens, resolve });
    });
  }

  /** Advance every active tween to `nowMs`; acks resolve on completion. */
  tick(nowMs: number): void {
    const finished: ActiveBatch[] = [];
    for (const batch of this.batches) {
      let allDone = true;
      for (const tween of batch.tweens) {
        if (tween.done) continue;
        const u = (nowMs - tween.startMs) / tween.durationMs;
        if (u >= 1) {
          this.write(tween.target, tween.property, tween.to);
          tween.done = true;
        } else {
          allDone = false;
          const value = interpolate(tween.kind, tween.from, tween.to, ease(tween.easing, u));
          this.write(tween.target, tween.property, value, true);
        }
      }
      if (allDone) finished.push(batch);
    }
    this.batches = this.batches.filter((b) => !finished.includes(b));
    for (const batch of finished) {
      batch.resolve({ batch_id: batch.id, ok: true });
    }
  }

  /** Instant return to the neutral face (server reset). */
  reset(): void {
    this.batches = [];
    Object.assign(this.values, neutralFaceValues());
    this.projectAll();
  }

  /** Direct write used by the speaking oscillation only. */
  writeMouthHeight(height: number): void {
    this.values.mouth.height = height;
    this.project("mouth");
  }

  private write(
    target: ElementName,
    property: string,
    value: number | string,
    transient = false,
  ): void {
    setValue(this.values, target, property, value);
    if (target === "face_background") {
      this.project("face_background");
    } else {
      this.project(target);
    }
    if (!transient && target === "mouth" && property === "height" && this.mouthHeightListener) {
      this.mouthHeightListener(value as number);
    }
  }

  private projectAll(): void {
    const names: ElementName[] = [
      "face_background",
      "left_eye",
      "right_eye",
      "upper_left_eyelid",
      "upper_right_eyelid",
      "lower_left_eyelid",
      "lower_right_eyelid",
      "mouth",
    ];
    for (const name of names) this.project(name);
  }

  private project(name: ElementName): void {
    const element = this.elements[name];
    if (!element) return;
    const styles = projectElementStyle(name, this.values);
    for (const [key, value] of Object.entries(styles)) {
      element.style.setProperty(key, value);
    }
  }
}

/** Pure projection of one element's values into CSS properties. */
export function projectElementStyle(
  name: ElementName,
  values: FaceValues,
): Record<string, string> {
  if (name === "face_background") {
    return { "background-color": values.background_color };
  }
  if (name === "left_eye" || name === "right_eye") {
    const eye = values[name];
    const center = name === "left_eye" ? theme.leftEyeCenter : theme.rightEyeCenter;
    return {
      width: `${theme.eyeSizeVmin}vmin`,
      height: `${theme.eyeSizeVmin}vmin`,
      left: `calc(${center.xPct}% - ${theme.eyeSizeVmin / 2}vmin)`,
      top: `calc(${center.yPct}% - ${theme.eyeSizeVmin / 2}vmin)`,
      "background-color": eye.color,
      "border-radius": eye.border_radius,
      transform:
        `translate(${eye.translate_x}%, ${eye.translate_y}%) ` +
        `scale(${eye.scale_x}, ${eye.scale_y})`,
    };
  }
  if (name === "mouth") {
    const mouth = values.mouth;
    return {
      width: `${mouth.width}vmin`,
      height: `${mouth.height}vmin`,
      left: `calc(${theme.mouthCenter.xPct}% - ${mouth.width / 2}vmin)`,
      top: `calc(${theme.mouthCenter.yPct}% - ${mouth.height / 2}vmin)`,
      "background-color": mouth.color,
      "border-radius": mouth.border_radius,
      transform:
        `translate(${mouth.translate_x}%, ${mouth.translate_y}%) ` +
        `rotate(${mouth.rotate}deg)`,
    };
  }
  const lid = values[name];
  const upper = name.startsWith("upper");
  const size = upper ? theme.upperEyelid : theme.lowerEyelid;
  const left = name.includes("left") ? theme.leftEyeCenter : theme.rightEyeCenter;
  const eyeHalf = theme.eyeSizeVmin / 2;
  const offset = upper
    ? `calc(${left.yPct}% - ${eyeHalf + size.heightVmin + theme.eyelidGapVmin}vmin)`
    : `calc(${left.yPct}% + ${eyeHalf + theme.eyelidGapVmin}vmin)`;
  return {
    width: `${size.widthVmin}vmin`,
    height: `${size.heightVmin}vmin`,
    left: `calc(${left.xPct}% - ${size.widthVmin / 2}vmin)`,
    top: offset,
    "background-color": lid.color,
    "border-radius": upper ? "12%" : "50%",
    transform: `translateY(${lid.translate_y}%) rotate(${lid.rotate}deg)`,
  };
}
