// Gateway client: feeds envelope lines from any transport into the store
// and carries UI_ACTION lines back. Transports: the node TCP bridge
// (SSE down, POST up) for live mode, or a recorded session for replay.

import { encodeAction, parseEnvelope, splitLines } from "./envelope.js";
import { SessionStore } from "./state.js";

export interface Transport {
  send(line: string): void;
  close(): void;
}

export class GatewayClient {
  private buffer = "";
  private transport: Transport | null = null;
  applied = 0;
  dropped = 0;

  constructor(readonly store: SessionStore, readonly clientId = "console") {}

  attach(transport: Transport): void {
    this.transport = transport;
  }

  feed(chunk: string): void {
    this.buffer += chunk;
    const { lines, rest } = splitLines(this.buffer);
    this.buffer = rest;
    for (const line of lines) this.feedLine(line);
  }

  feedLine(line: string): void {
    const env = parseEnvelope(line);
    if (!env) {
      this.dropped++;
      return;
    }
    if (this.store.apply(env)) this.applied++;
    else this.dropped++;
  }

  submit(action: Record<string, unknown>): void {
    if (!this.transport) return;
    this.transport.send(encodeAction(this.clientId, action, Date.now()));
  }
}

export class SseBridgeTransport implements Transport {
  private source: EventSource;

  constructor(client: GatewayClient, baseUrl = "") {
    this.source = new EventSource(`${baseUrl}/stream`);
    this.source.onmessage = (ev) => client.feed(ev.data + "\n");
    this.source.onerror = () => client.store.disconnected();
    this.sendUrl = `${baseUrl}/action`;
  }

  private sendUrl: string;

  send(line: string): void {
    void fetch(this.sendUrl, { method: "POST", body: line });
  }

  close(): void {
    this.source.close();
  }
}
