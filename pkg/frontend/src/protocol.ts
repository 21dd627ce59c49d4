// Wire protocol shared with the runtime server (schema version 1).

export const WIRE_VERSION = 1;

export type ElementName =
  | "face_background"
  | "left_eye"
  | "right_eye"
  | "upper_left_eyelid"
  | "upper_right_eyelid"
  | "lower_left_eyelid"
  | "lower_right_eyelid"
  | "mouth";

export type EasingName = "ease_in_out_quad" | "linear" | "ease_in_quad" | "ease_out_quad";

export interface RendererCommand {
  target: ElementName;
  property: string;
  value: number | string;
  duration_ms: number;
  easing: EasingName;
}

export interface CommandBatch {
  batch_id: number;
  commands: RendererCommand[];
}

export type MessageKind =
  | "apply_batch"
  | "mouth_speaking"
  | "play_audio"
  | "reset"
  | "heartbeat"
  | "client_event";

export interface WireMessage {
  v: number;
  session: string;
  seq: number;
  kind: MessageKind;
  [extra: string]: unknown;
}

export type ClientEvent =
  | { type: "speech"; text: string }
  | { type: "end_of_speech" }
  | { type: "user_choice"; choice: Record<string, unknown> };

export function parseMessage(text: string): WireMessage {
  const obj = JSON.parse(text);
  if (typeof obj !== "object" || obj === null) {
    throw new Error("frame must be a JSON object");
  }
  if (obj.v !== WIRE_VERSION) {
    throw new Error(`unsupported wire version ${obj.v}`);
  }
  for (const field of ["session", "seq", "kind"]) {
    if (!(field in obj)) {
      throw new Error(`message missing field '${field}'`);
    }
  }
  return obj as WireMessage;
}

export function clientEventMessage(
  session: string,
  seq: number,
  event: ClientEvent,
): WireMessage {
  return { v: WIRE_VERSION, session, seq, kind: "client_event", event };
}
