// Connection handling: buffering window, reconnect status, sequence checks.

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { RendererSocket, SocketLike } from "../src/socket.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  readyState = 0; // CONNECTING
  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.readyState = 3;
    this.onclose?.();
  }

  open(): void {
    this.readyState = 1;
    this.onopen?.();
  }

  deliver(obj: unknown): void {
    this.onmessage?.({ data: JSON.stringify(obj) });
  }
}

describe("RendererSocket", () => {
  let sockets: FakeSocket[];
  let now: number;

  beforeEach(() => {
    vi.useFakeTimers();
    sockets = [];
    now = 0;
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  function build(handlers: Partial<Parameters<typeof RendererSocket>[2]> = {}) {
    return new RendererSocket(
      "ws://test/ws/s1",
      "s1",
      { onMessage: () => {}, ...handlers },
      {
        connect: () => {
          const socket = new FakeSocket();
          sockets.push(socket);
          return socket;
        },
        now: () => now,
        reconnectDelayMs: 100,
      },
    );
  }

  it("buffers events while disconnected and flushes on connect", () => {
    const client = build();
    client.sendEvent({ type: "speech", text: "hello" });
    expect(sockets[0].sent).toEqual([]);
    sockets[0].open();
    expect(sockets[0].sent.length).toBe(1);
    expect(JSON.parse(sockets[0].sent[0]).event.text).toBe("hello");
  });

  it("drops buffered events older than the 10 s window", () => {
    const client = build();
    client.sendEvent({ type: "speech", text: "stale" });
    now += 11_000;
    client.sendEvent({ type: "speech", text: "fresh" });
    sockets[0].open();
    const texts = sockets[0].sent.map((s) => JSON.parse(s).event.text);
    expect(texts).toEqual(["fresh"]);
  });

  it("reports reconnecting and opens a new socket after close", () => {
    const statuses: string[] = [];
    build({ onStatus: (s) => statuses.push(s) });
    sockets[0].open();
    sockets[0].close();
    expect(statuses).toEqual(["connected", "reconnecting"]);
    vi.advanceTimersByTime(150);
    expect(sockets.length).toBe(2);
    sockets[1].open();
    expect(statuses).toEqual(["connected", "reconnecting", "connected"]);
  });

  it("flags sequence regressions from the server", () => {
    const errors: string[] = [];
    const received: number[] = [];
    build({
      onMessage: (m) => received.push(m.seq),
      onProtocolError: (d) => errors.push(d),
    });
    sockets[0].open();
    sockets[0].deliver({ v: 1, session: "s1", seq: 2, kind: "heartbeat" });
    sockets[0].deliver({ v: 1, session: "s1", seq: 1, kind: "heartbeat" });
    expect(received).toEqual([2, 1]);
    expect(errors.length).toBe(1);
    expect(errors[0]).toContain("backwards");
  });

  it("rejects frames with the wrong version", () => {
    const errors: string[] = [];
    const received: number[] = [];
    build({
      onMessage: (m) => received.push(m.seq),
      onProtocolError: (d) => errors.push(d),
    });
    sockets[0].open();
    sockets[0].deliver({ v: 7, session: "s1", seq: 1, kind: "heartbeat" });
    expect(received).toEqual([]);
    expect(errors.length).toBe(1);
  });

  it("client events carry increasing sequence numbers", () => {
    const client = build();
    sockets[0].open();
    client.sendEvent({ type: "speech", text: "a" });
    client.sendEvent({ type: "end_of_speech" });
    const seqs = sockets[0].sent.map((s) => JSON.parse(s).seq);
    expect(seqs).toEqual([1, 2]);
  });
});
