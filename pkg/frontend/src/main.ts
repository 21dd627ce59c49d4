// Browser bootstrap: builds the face, connects to the runtime server, and
// wires playback, speaking, capture, and the mode buttons together.

import { SpeechCapture } from "./capture.js";
import { RenderedFace } from "./face.js";
import type { CommandBatch, ElementName, WireMessage } from "./protocol.js";
import { RendererSocket } from "./socket.js";
import { SpeakingMouth } from "./speaking.js";

const ELEMENTS: ElementName[] = [
  "face_background",
  "left_eye",
  "right_eye",
  "upper_left_eyelid",
  "upper_right_eyelid",
  "lower_left_eyelid",
  "lower_right_eyelid",
  "mouth",
];

function buildFaceDom(container: HTMLElement): Partial<Record<ElementName, HTMLElement>> {
  const bindings: Partial<Record<ElementName, HTMLElement>> = {};
  for (const name of ELEMENTS) {
    const el = document.createElement("div");
    el.className = `face-el ${name}`;
    if (name === "face_background") {
      el.classList.add("face-bg");
    }
    container.appendChild(el);
    bindings[name] = el;
  }
  return bindings;
}

function sessionIdFromUrl(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("session") ?? `web-${Math.random().toString(36).slice(2, 8)}`;
}

function main(): void {
  const container = document.getElementById("face")!;
  const banner = document.getElementById("banner")!;
  const bindings = buildFaceDom(container);
  const face = new RenderedFace(bindings);
  const speaking = new SpeakingMouth(face);

  const loop = (nowMs: number) => {
    face.tick(nowMs);
    speaking.tick(nowMs);
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);

  const session = sessionIdFromUrl();
  const scheme = window.location.protocol === "https:" ? "wss" : "ws";
  const url = `${scheme}://${window.location.host}/ws/${session}`;

  const socket = new RendererSocket(
    url,
    session,
    {
      onMessage: (message: WireMessage) => handleMessage(message),
      onStatus: (status) => {
        banner.textContent = status === "connected" ? "" : "reconnecting to the robot...";
        banner.classList.toggle("visible", status !== "connected");
      },
      onProtocolError: (detail) => console.warn("protocol:", detail),
    },
  );

  let audioEl: HTMLAudioElement | null = null;

  function handleMessage(message: WireMessage): void {
    const now = performance.now();
    switch (message.kind) {
      case "apply_batch": {
        const batch = message.batch as CommandBatch;
        void face.applyBatch(batch, now);
        break;
      }
      case "mouth_speaking": {
        if (message.on) {
          speaking.on(now);
        } else {
          speaking.off();
        }
        break;
      }
      case "play_audio": {
        const body = message as { audio?: { format: string; data_b64: string }; ref?: string };
        const src = body.audio
          ? `data:audio/${body.audio.format};base64,${body.audio.data_b64}`
          : body.ref!;
        audioEl?.pause();
        audioEl = new Audio(src);
        void audioEl.play().catch((err) => console.warn("audio playback:", err));
        break;
      }
      case "reset": {
        speaking.off();
        face.reset();
        break;
      }
      default:
        break;
    }
  }

  setInterval(() => socket.sendHeartbeat(), 250);

  const capture = new SpeechCapture({
    onSpeech: (text) => socket.sendEvent({ type: "speech", text }),
    onEndOfSpeech: () => socket.sendEvent({ type: "end_of_speech" }),
    onFallback: () => {
      document.getElementById("text-input-row")!.classList.add("visible");
    },
  });

  document.getElementById("start-conversation")!.addEventListener("click", () => {
    socket.sendEvent({ type: "user_choice", choice: { mode: "conversation" } });
    capture.start();
  });
  document.getElementById("start-story")!.addEventListener("click", async () => {
    const listing = await fetch("/trajectories").then((r) => r.json());
    if (!listing.length) {
      banner.textContent = "no stories on the server yet";
      banner.classList.add("visible");
      return;
    }
    socket.sendEvent({
      type: "user_choice",
      choice: { mode: "story", trajectory_digest: listing[0].digest },
    });
  });
  const input = document.getElementById("text-input") as HTMLInputElement;
  document.getElementById("text-send")!.addEventListener("click", () => {
    capture.submitText(input.value);
    input.value = "";
  });
}

main();
