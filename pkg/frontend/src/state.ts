// Session store: folds the gateway stream (one UI_STATE snapshot plus
// ordered UI_EVENT increments) into the view model. The console never
// invents state: the action set, poses, and modes are exactly the most
// recent transmitted values. Stale frames (seq not advancing) are dropped;
// a fresh UI_STATE resets everything (reconnect semantics).

import { ActionSpec, Envelope, GridMeta, NotificationItem } from "./envelope.js";

export interface AgentEntry {
  id: string;
  kind: string;
  platform: string;
  modes: string[];
  services: string[];
}

export interface BtState {
  robot: string;
  mode: string;
  authorized: string | null;
  convoy: { convoy_id: string; role: string; index: number } | null;
  offered: string[];
  guard_failures: Record<string, string>;
}

export interface Telemetry {
  robot: string;
  pose: [number, number, number];
  twist: [number, number];
  mode: string;
  battery_ok: boolean;
  signal: number;
  path: [number, number][];
  markers: { kind: string; x: number; y: number }[];
}

export interface RobotView {
  bt: BtState | null;
  telemetry: Telemetry | null;
  map: GridMeta | null;
  health: Record<string, [string, number]>;
  trail: [number, number][];
}

const TRAIL_KEEP = 400;

export class SessionStore {
  base = "";
  connected = false;
  agents: AgentEntry[] = [];
  selection: string[] = [];
  held: string[] = [];
  robots = new Map<string, RobotView>();
  actions: ActionSpec[] = [];
  notifications: NotificationItem[] = [];
  pending = false; // an action was submitted; buttons re-enable on feedback
  private lastSeq = -1;
  private listeners: (() => void)[] = [];

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  private robot(id: string): RobotView {
    let view = this.robots.get(id);
    if (!view) {
      view = { bt: null, telemetry: null, map: null, health: {}, trail: [] };
      this.robots.set(id, view);
    }
    return view;
  }

  orderedNotifications(): NotificationItem[] {
    return [...this.notifications].sort(
      (a, b) => a.priority - b.priority || a.ms - b.ms,
    );
  }

  apply(env: Envelope): boolean {
    if (env.type === "UI_STATE") {
      this.reset(env.body["session"] as Record<string, unknown>);
      this.lastSeq = env.seq;
      this.connected = true;
      this.emit();
      return true;
    }
    if (env.type !== "UI_EVENT") return false;
    if (env.seq <= this.lastSeq) return false; // stale or replayed out of order
    this.lastSeq = env.seq;
    const kind = env.body["kind"] as string;
    const data = env.body["data"] as Record<string, unknown>;
    this.applyEvent(kind, data);
    this.emit();
    return true;
  }

  private reset(session: Record<string, unknown>): void {
    this.base = session["base"] as string;
    this.agents = (session["agents"] as AgentEntry[]) ?? [];
    this.selection = (session["selection"] as string[]) ?? [];
    this.held = (session["held"] as string[]) ?? [];
    this.actions = (session["actions"] as ActionSpec[]) ?? [];
    this.notifications = ((session["notifications"] as NotificationItem[]) ?? []).slice();
    this.pending = false;
    this.robots = new Map();
    const robots = (session["robots"] as Record<string, Record<string, unknown>>) ?? {};
    for (const [rid, data] of Object.entries(robots)) {
      const view = this.robot(rid);
      view.bt = (data["bt"] as BtState) ?? null;
      view.telemetry = (data["telemetry"] as Telemetry) ?? null;
      view.map = (data["map"] as GridMeta) ?? null;
      const health = (data["health"] as Record<string, [string, number]>) ?? {};
      view.health = { ...health };
      if (view.telemetry) view.trail = [[view.telemetry.pose[0], view.telemetry.pose[1]]];
    }
  }

  private applyEvent(kind: string, data: Record<string, unknown>): void {
    switch (kind) {
      case "selection":
        this.selection = (data["selection"] as string[]) ?? [];
        break;
      case "actions":
        this.actions = (data["actions"] as ActionSpec[]) ?? [];
        this.pending = false; // fresh authoritative set re-enables buttons
        break;
      case "bt": {
        const rid = data["robot"] as string;
        const bt = data["bt"] as BtState;
        const view = this.robot(rid);
        view.bt = bt;
        if (bt.authorized === this.base) {
          if (!this.held.includes(rid)) this.held.push(rid);
        } else {
          this.held = this.held.filter((r) => r !== rid);
        }
        break;
      }
      case "telemetry": {
        const rid = data["robot"] as string;
        const view = this.robot(rid);
        view.telemetry = data["telemetry"] as Telemetry;
        const [x, y] = view.telemetry.pose;
        const last = view.trail[view.trail.length - 1];
        if (!last || Math.hypot(x - last[0], y - last[1]) > 0.05) {
          view.trail.push([x, y]);
          if (view.trail.length > TRAIL_KEEP) view.trail.shift();
        }
        break;
      }
      case "map": {
        const rid = data["robot"] as string;
        this.robot(rid).map = {
          width: data["width"] as number,
          height: data["height"] as number,
          resolution: data["resolution"] as number,
          origin: data["origin"] as [number, number],
          cells: data["cells"] as string,
        };
        break;
      }
      case "health": {
        const rid = data["robot"] as string;
        const view = this.robot(rid);
        view.health[data["node"] as string] = [
          data["status"] as string,
          data["restart_count"] as number,
        ];
        break;
      }
      case "notification":
        this.notifications.push({
          priority: data["priority"] as number,
          robot: data["robot"] as string,
          text: data["text"] as string,
          ms: data["ms"] as number,
        });
        break;
      case "grant": {
        const rid = data["robot"] as string;
        if (!this.held.includes(rid)) this.held.push(rid);
        break;
      }
      case "mode_ack":
      default:
        break; // informational; the next bt/actions event carries the state
    }
  }

  disconnected(): void {
    this.connected = false;
    this.emit();
  }
}
