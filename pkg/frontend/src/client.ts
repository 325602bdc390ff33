/** Stream client: subscribe from a sequence number, dedup, resubscribe on drop. */

import { ProtocolMessage } from "./protocol.js";

export interface SocketLike {
  onmessage: ((event: { data: string }) => void) | null;
  onclose: ((event: unknown) => void) | null;
  onopen: ((event: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export class StreamClient {
  lastSeq = -1;
  private socket: SocketLike | null = null;
  private stopped = false;

  constructor(
    private urlFor: (fromSeq: number) => string,
    private connect: SocketFactory,
    private onMessage: (msg: ProtocolMessage) => void,
    private onEnd: () => void = () => {}
  ) {}

  start(fromSeq = 0): void {
    this.stopped = false;
    this.lastSeq = fromSeq - 1;
    this.open();
  }

  private open(): void {
    const socket = this.connect(this.urlFor(this.lastSeq + 1));
    this.socket = socket;
    socket.onmessage = (event) => {
      const msg = JSON.parse(event.data) as ProtocolMessage;
      if (msg.seq !== null) {
        if (msg.seq <= this.lastSeq) return; // duplicate delivery
        this.lastSeq = msg.seq;
      }
      this.onMessage(msg);
    };
    socket.onclose = () => {
      if (!this.stopped) this.onEnd();
    };
  }

  /** Resubscribe from the last delivered sequence (after a drop). */
  resubscribe(): void {
    if (this.socket) this.socket.close();
    this.open();
  }

  sendCommand(kind: string, payload: Record<string, unknown>): void {
    if (!this.socket) throw new Error("stream not started");
    this.socket.send(JSON.stringify({ kind, payload }));
  }

  stop(): void {
    this.stopped = true;
    if (this.socket) this.socket.close();
    this.socket = null;
  }
}
