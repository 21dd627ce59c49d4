import type { ElementName } from "../src/protocol.js";
import type { FaceValues } from "../src/values.js";
import { radiusCorners } from "../src/values.js";

export const ELEMENT_NAMES: ElementName[] = [
  "face_background",
  "left_eye",
  "right_eye",
  "upper_left_eyelid",
  "upper_right_eyelid",
  "lower_left_eyelid",
  "lower_right_eyelid",
  "mouth",
];

export function makeElements(): Record<ElementName, HTMLElement> {
  const bindings = {} as Record<ElementName, HTMLElement>;
  for (const name of ELEMENT_NAMES) {
    const el = document.createElement("div");
    el.className = name;
    document.body.appendChild(el);
    bindings[name] = el;
  }
  return bindings;
}

/** Assert renderer values equal a server-side face state within rounding. */
export function diffAgainstServerState(
  values: FaceValues,
  serverState: Record<string, any>,
  tolerance = 0.01,
): string[] {
  const problems: string[] = [];
  const check = (path: string, actual: number | string, expected: number | string) => {
    if (typeof expected === "number") {
      if (Math.abs((actual as number) - expected) > tolerance) {
        problems.push(`${path}: ${actual} != ${expected}`);
      }
      return;
    }
    if (path.endsWith("border_radius")) {
      const a = radiusCorners(actual as string);
      const b = radiusCorners(expected);
      if (a.some((v, i) => Math.abs(v - b[i]) > tolerance)) {
        problems.push(`${path}: ${actual} != ${expected}`);
      }
      return;
    }
    if ((actual as string).toUpperCase() !== expected.toUpperCase()) {
      problems.push(`${path}: ${actual} != ${expected}`);
    }
  };

  check("background_color", values.background_color, serverState.background_color);
  for (const name of ELEMENT_NAMES) {
    if (name === "face_background") continue;
    const mine = values[name] as unknown as Record<string, number | string>;
    const theirs = serverState[name] as Record<string, number | string>;
    for (const [prop, expected] of Object.entries(theirs)) {
      check(`${name}.${prop}`, mine[prop], expected);
    }
  }
  return problems;
}
