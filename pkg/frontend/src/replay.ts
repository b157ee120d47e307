// Replay a recorded gateway session (ndjson of UI_STATE/UI_EVENT frames).
// Used by the conformance tests and the demo mode; actions submitted
// during replay are collected instead of transmitted.

import { GatewayClient, Transport } from "./gateway.js";

export class ReplayTransport implements Transport {
  sent: string[] = [];

  send(line: string): void {
    this.sent.push(line);
  }

  close(): void {}
}

export interface ReplayStep {
  line: string;
  applied: boolean;
}

export class SessionReplay {
  private lines: string[];
  private cursor = 0;

  constructor(text: string, readonly client: GatewayClient) {
    this.lines = text.split("\n").filter((l) => l.length > 0);
  }

  get length(): number {
    return this.lines.length;
  }

  get done(): boolean {
    return this.cursor >= this.lines.length;
  }

  step(): ReplayStep | null {
    if (this.done) return null;
    const line = this.lines[this.cursor++];
    const before = this.client.applied;
    this.client.feedLine(line);
    return { line, applied: this.client.applied > before };
  }

  run(): number {
    let n = 0;
    while (!this.done) {
      this.step();
      n++;
    }
    return n;
  }
}
