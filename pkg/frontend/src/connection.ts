import { ProtocolMessage, decodeMessage, encodeMessage } from "./protocol.js";

// Thin WebSocket wrapper speaking the broker protocol: HELLO on open,
// acked subscriptions, request/reply service calls, and automatic
// reconnection with exponential backoff.  The socket constructor is
// injectable so the whole thing runs under test without a server.

export interface WebSocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type WsFactory = (url: string) => WebSocketLike;

export type ConnectionStatus = "idle" | "connecting" | "connected"
  | "retrying" | "closed";

export interface ServiceError {
  code: string;
  text: string;
}

interface Pending {
  resolve: (message: ProtocolMessage) => void;
  reject: (err: Error) => void;
  sentAt: number;
}

export interface ConnectionOptions {
  name?: string;
  factory?: WsFactory;
  backoffMs?: number;     // first retry delay, doubled up to maxBackoffMs
  maxBackoffMs?: number;
  now?: () => number;
}

export class SimConnection {
  readonly url: string;
  status: ConnectionStatus = "idle";
  latencyMs: number | null = null;   // last measured ping round trip
  badMessages = 0;                   // inbound frames that failed the schema
  reconnects = 0;
  onStatus: ((status: ConnectionStatus) => void) | null = null;
  onEvent: ((line: string) => void) | null = null;

  private readonly name: string;
  private readonly factory: WsFactory;
  private readonly backoffMs: number;
  private readonly maxBackoffMs: number;
  private readonly now: () => number;
  private ws: WebSocketLike | null = null;
  private seq = 0;
  private pending = new Map<number, Pending>();
  private handlers = new Map<string, (payload: any) => void>();
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private attempts = 0;
  private stopped = false;

  constructor(url: string, options: ConnectionOptions = {}) {
    this.url = url;
    this.name = options.name ?? "teleop-ui";
    this.factory = options.factory
      ?? ((u: string) => new WebSocket(u) as unknown as WebSocketLike);
    this.backoffMs = options.backoffMs ?? 250;
    this.maxBackoffMs = options.maxBackoffMs ?? 4000;
    this.now = options.now ?? (() => Date.now());
  }

  connect(): void {
    if (this.stopped) return;
    this.setStatus(this.attempts === 0 ? "connecting" : "retrying");
    let ws: WebSocketLike;
    try {
      ws = this.factory(this.url);
    } catch {
      this.scheduleRetry();
      return;
    }
    this.ws = ws;
    ws.onopen = () => this.handshake();
    ws.onmessage = (ev) => this.receive(String(ev.data));
    ws.onerror = () => { /* close always follows */ };
    ws.onclose = () => this.dropped();
  }

  close(): void {
    this.stopped = true;
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.retryTimer = null;
    this.failPending(new Error("connection closed"));
    if (this.ws) this.ws.close();
    this.ws = null;
    this.setStatus("closed");
  }

  subscribe(topic: string, handler: (payload: any) => void): void {
    this.handlers.set(topic, handler);
    if (this.status === "connected") {
      void this.request({ op: "SUBSCRIBE", seq: this.nextSeq(), topic });
    }
  }

  async call(service: string, request: Record<string, unknown>):
      Promise<any> {
    const reply = await this.request(
      { op: "CALL", seq: this.nextSeq(), service, request });
    return reply.result;
  }

  async ping(): Promise<number> {
    const sentAt = this.now();
    await this.request({ op: "PING", seq: this.nextSeq() });
    const rtt = this.now() - sentAt;
    this.latencyMs = rtt;
    return rtt;
  }

  async listTopics(): Promise<any[]> {
    const reply = await this.request(
      { op: "LIST_TOPICS", seq: this.nextSeq() });
    return (reply.topics as any[]) ?? [];
  }

  private nextSeq(): number {
    return this.seq++;
  }

  private setStatus(status: ConnectionStatus): void {
    if (status === this.status) return;
    this.status = status;
    if (this.onStatus) this.onStatus(status);
  }

  private handshake(): void {
    this.attempts = 0;
    const seq = this.nextSeq();
    this.expect(seq).then(() => {
      this.setStatus("connected");
      // re-arm every subscription from before the drop
      for (const topic of this.handlers.keys()) {
        void this.request({ op: "SUBSCRIBE", seq: this.nextSeq(), topic });
      }
    }).catch(() => { /* socket died mid-handshake; retry path owns it */ });
    this.sendRaw({ op: "HELLO", seq, name: this.name });
  }

  private receive(text: string): void {
    let message: ProtocolMessage;
    try {
      message = decodeMessage(text);
    } catch (err) {
      this.badMessages += 1;
      if (this.onEvent) this.onEvent(`bad frame: ${(err as Error).message}`);
      return;
    }
    if (message.op === "PUBLISH") {
      const handler = this.handlers.get(message.topic as string);
      if (handler) handler(message.payload);
      return;
    }
    const waiter = this.pending.get(message.seq);
    if (waiter === undefined) return;
    this.pending.delete(message.seq);
    if (message.op === "ERROR") {
      const code = String(message.code ?? "Error");
      const text2 = String(message.text ?? "");
      waiter.reject(Object.assign(new Error(`${code}: ${text2}`),
                                  { code, text: text2 }));
    } else {
      waiter.resolve(message);
    }
  }

  private request(message: ProtocolMessage): Promise<ProtocolMessage> {
    const result = this.expect(message.seq);
    this.sendRaw(message);
    return result;
  }

  private expect(seq: number): Promise<ProtocolMessage> {
    return new Promise((resolve, reject) => {
      this.pending.set(seq, { resolve, reject, sentAt: this.now() });
    });
  }

  private sendRaw(message: ProtocolMessage): void {
    if (this.ws === null) {
      const waiter = this.pending.get(message.seq);
      if (waiter) {
        this.pending.delete(message.seq);
        waiter.reject(new Error("not connected"));
      }
      return;
    }
    try {
      this.ws.send(encodeMessage(message));
    } catch (err) {
      const waiter = this.pending.get(message.seq);
      if (waiter) {
        this.pending.delete(message.seq);
        waiter.reject(err as Error);
      }
    }
  }

  private dropped(): void {
    this.ws = null;
    this.failPending(new Error("connection dropped"));
    if (this.stopped) return;
    this.scheduleRetry();
  }

  private scheduleRetry(): void {
    this.setStatus("retrying");
    const delay = Math.min(this.backoffMs * 2 ** this.attempts,
                           this.maxBackoffMs);
    this.attempts += 1;
    this.reconnects += 1;
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      this.connect();
    }, delay);
  }

  private failPending(err: Error): void {
    const waiters = [...this.pending.values()];
    this.pending.clear();
    for (const waiter of waiters) waiter.reject(err);
  }
}
