import type { EasingName } from "./protocol.js";

// Quadratic easings matching the server's closed set.
export function ease(name: EasingName, u: number): number {
  const t = Math.min(Math.max(u, 0), 1);
  switch (name) {
    case "linear":
      return t;
    case "ease_in_quad":
      return t * t;
    case "ease_out_quad":
      return t * (2 - t);
    case "ease_in_out_quad":
      return t < 0.5 ? 2 * t * t : 1 - (-2 * t + 2) ** 2 / 2;
  }
}
