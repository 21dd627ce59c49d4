// The renderer's value model: one number/string per degree of freedom,
// mirroring the server's face-state JSON field for field.

import type { ElementName } from "./protocol.js";

export interface EyeValues {
  color: string;
  translate_x: number;
  translate_y: number;
  scale_x: number;
  scale_y: number;
  border_radius: string;
}

export interface EyelidValues {
  color: string;
  translate_y: number;
  rotate: number;
}

export interface MouthValues {
  color: string;
  translate_x: number;
  translate_y: number;
  rotate: number;
  width: number;
  height: number;
  border_radius: string;
}

export interface FaceValues {
  background_color: string;
  left_eye: EyeValues;
  right_eye: EyeValues;
  upper_left_eyelid: EyelidValues;
  upper_right_eyelid: EyelidValues;
  lower_left_eyelid: EyelidValues;
  lower_right_eyelid: EyelidValues;
  mouth: MouthValues;
}

export const EYELID_NAMES = [
  "upper_left_eyelid",
  "upper_right_eyelid",
  "lower_left_eyelid",
  "lower_right_eyelid",
] as const;

const neutralEye = (): EyeValues => ({
  color: "#000000",
  translate_x: 0,
  translate_y: 0,
  scale_x: 1,
  scale_y: 1,
  border_radius: "50%",
});

const neutralEyelid = (): EyelidValues => ({ color: "#F5F5F5", translate_y: 0, rotate: 0 });

export function neutralFaceValues(): FaceValues {
  return {
    background_color: "#F5F5F5",
    left_eye: neutralEye(),
    right_eye: neutralEye(),
    upper_left_eyelid: neutralEyelid(),
    upper_right_eyelid: neutralEyelid(),
    lower_left_eyelid: neutralEyelid(),
    lower_right_eyelid: neutralEyelid(),
    mouth: {
      color: "#FFC0CB",
      translate_x: 0,
      translate_y: 0,
      rotate: 0,
      width: 10,
      height: 4,
      border_radius: "30%",
    },
  };
}

export const ELEMENT_PROPERTIES: Record<ElementName, ReadonlySet<string>> = {
  face_background: new Set(["background_color"]),
  left_eye: new Set(["color", "translate_x", "translate_y", "scale_x", "scale_y", "border_radius"]),
  right_eye: new Set(["color", "translate_x", "translate_y", "scale_x", "scale_y", "border_radius"]),
  upper_left_eyelid: new Set(["color", "translate_y", "rotate"]),
  upper_right_eyelid: new Set(["color", "translate_y", "rotate"]),
  lower_left_eyelid: new Set(["color", "translate_y", "rotate"]),
  lower_right_eyelid: new Set(["color", "translate_y", "rotate"]),
  mouth: new Set(["color", "translate_x", "translate_y", "rotate", "width", "height", "border_radius"]),
};

export function getValue(values: FaceValues, target: ElementName, property: string): number | string {
  if (target === "face_background") {
    return values.background_color;
  }
  return (values[target] as unknown as Record<string, number | string>)[property];
}

export function setValue(
  values: FaceValues,
  target: ElementName,
  property: string,
  value: number | string,
): void {
  if (target === "face_background") {
    values.background_color = String(value);
    return;
  }
  (values[target] as unknown as Record<string, number | string>)[property] = value;
}

export function cloneValues(values: FaceValues): FaceValues {
  return JSON.parse(JSON.stringify(values)) as FaceValues;
}

// -- interpolation -------------------------------------------------------------

export function lerp(a: number, b: number, u: number): number {
  return a + (b - a) * u;
}

function hexChannel(hex: string, i: number): number {
  return parseInt(hex.slice(1 + 2 * i, 3 + 2 * i), 16);
}

export function lerpColor(a: string, b: string, u: number): string {
  const parts = [0, 1, 2].map((i) => {
    const v = Math.round(lerp(hexChannel(a, i), hexChannel(b, i), u));
    return Math.min(Math.max(v, 0), 255).toString(16).padStart(2, "0");
  });
  return `#${parts.join("")}`.toUpperCase();
}

export function radiusCorners(text: string): [number, number, number, number] {
  const parts = text.split(/\s+/).filter(Boolean).map((p) => parseFloat(p));
  if (parts.length === 1) {
    return [parts[0], parts[0], parts[0], parts[0]];
  }
  if (parts.length === 4) {
    return parts as [number, number, number, number];
  }
  throw new Error(`bad border radius '${text}'`);
}

export function lerpRadius(a: string, b: string, u: number): string {
  const ca = radiusCorners(a);
  const cb = radiusCorners(b);
  const corners = ca.map((v, i) => lerp(v, cb[i], u));
  return corners.map((c) => `${Math.round(c * 100) / 100}%`).join(" ");
}

export type ValueKind = "number" | "color" | "radius";

export function kindOf(property: string): ValueKind {
  if (property === "color" || property === "background_color") return "color";
  if (property === "border_radius") return "radius";
  return "number";
}

export function interpolate(
  kind: ValueKind,
  from: number | string,
  to: number | string,
  u: number,
): number | string {
  if (kind === "number") return lerp(from as number, to as number, u);
  if (kind === "color") return lerpColor(from as string, to as string, u);
  return lerpRadius(from as string, to as string, u);
}
