// Gateway envelope parsing. The console speaks only the gateway schema:
// newline-delimited JSON envelopes carrying UI_STATE / UI_EVENT inbound and
// UI_ACTION outbound. Everything else on the stream is ignored.

export interface Envelope {
  v: number;
  type: string;
  seq: number;
  src: string;
  ts: number;
  body: Record<string, unknown>;
}

export interface ActionSpec {
  tag: string;
  robot?: string;
  node?: string;
  convoy_id?: string;
}

export interface GridMeta {
  width: number;
  height: number;
  resolution: number;
  origin: [number, number];
  cells: string; // base64, 1 byte per cell: 0 unknown, 1 free, 2 occupied
}

export interface NotificationItem {
  priority: number;
  robot: string;
  text: string;
  ms: number;
}

export function parseEnvelope(line: string): Envelope | null {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const env = obj as Envelope;
  if (env.v !== 1) return null;
  if (typeof env.type !== "string" || typeof env.seq !== "number") return null;
  if (typeof env.body !== "object" || env.body === null) return null;
  return env;
}

let actionSeq = 0;

export function encodeAction(src: string, action: Record<string, unknown>, ts: number): string {
  const env = {
    v: 1,
    type: "UI_ACTION",
    seq: actionSeq++,
    src,
    ts,
    body: { action },
  };
  return JSON.stringify(env) + "\n";
}

export function splitLines(buffer: string): { lines: string[]; rest: string } {
  const parts = buffer.split("\n");
  const rest = parts.pop() ?? "";
  return { lines: parts.filter((l) => l.length > 0), rest };
}
