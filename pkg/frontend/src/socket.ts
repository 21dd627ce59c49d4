// Server connection with reconnect and short-lived local buffering.
// While disconnected, outbound client events are held for up to 10 seconds
// and flushed on reconnect; the UI gets status callbacks for its banner.

import { ClientEvent, WireMessage, clientEventMessage, parseMessage } from "./protocol.js";

export interface SocketHandlers {
  onMessage: (message: WireMessage) => void;
  onStatus?: (status: "connected" | "reconnecting") => void;
  onProtocolError?: (detail: string) => void;
}

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  readyState: number;
}

export interface SocketOptions {
  reconnectDelayMs?: number;
  bufferWindowMs?: number;
  connect?: (url: string) => SocketLike;
  now?: () => number;
}

const OPEN = 1;

export class RendererSocket {
  readonly session: string;
  private url: string;
  private handlers: SocketHandlers;
  private reconnectDelayMs: number;
  private bufferWindowMs: number;
  private connectImpl: (url: string) => SocketLike;
  private now: () => number;
  private socket: SocketLike | null = null;
  private buffer: { at: number; payload: string }[] = [];
  private clientSeq = 0;
  private lastServerSeq = 0;
  private closed = false;

  constructor(url: string, session: string, handlers: SocketHandlers, options: SocketOptions = {}) {
    this.url = url;
    this.session = session;
    this.handlers = handlers;
    this.reconnectDelayMs = options.reconnectDelayMs ?? 1000;
    this.bufferWindowMs = options.bufferWindowMs ?? 10_000;
    this.connectImpl = options.connect ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.now = options.now ?? (() => Date.now());
    this.open();
  }

  private open(): void {
    const socket = this.connectImpl(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.handlers.onStatus?.("connected");
      this.flushBuffer();
    };
    socket.onmessage = (event) => {
      let message: WireMessage;
      try {
        message = parseMessage(event.data);
      } catch (error) {
        this.handlers.onProtocolError?.(String(error));
        return;
      }
      if (message.seq <= this.lastServerSeq) {
        this.handlers.onProtocolError?.(
          `sequence went backwards: ${message.seq} after ${this.lastServerSeq}`,
        );
      }
      this.lastServerSeq = message.seq;
      this.handlers.onMessage(message);
    };
    socket.onclose = () => {
      if (this.closed) return;
      this.handlers.onStatus?.("reconnecting");
      setTimeout(() => {
        if (!this.closed) this.open();
      }, this.reconnectDelayMs);
    };
    socket.onerror = () => {
      // close handler drives the reconnect
    };
  }

  private flushBuffer(): void {
    const cutoff = this.now() - this.bufferWindowMs;
    const pending = this.buffer.filter((item) => item.at >= cutoff);
    this.buffer = [];
    for (const item of pending) {
      this.socket?.send(item.payload);
    }
  }

  sendEvent(event: ClientEvent): void {
    this.clientSeq += 1;
    const payload = JSON.stringify(clientEventMessage(this.session, this.clientSeq, event));
    if (this.socket && this.socket.readyState === OPEN) {
      this.socket.send(payload);
      return;
    }
    const cutoff = this.now() - this.bufferWindowMs;
    this.buffer = this.buffer.filter((item) => item.at >= cutoff);
    this.buffer.push({ at: this.now(), payload });
  }

  sendHeartbeat(): void {
    if (this.socket && this.socket.readyState === OPEN) {
      this.clientSeq += 1;
      this.socket.send(
        JSON.stringify({ v: 1, session: this.session, seq: this.clientSeq, kind: "heartbeat" }),
      );
    }
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
