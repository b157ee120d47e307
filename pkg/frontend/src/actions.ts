// Action panel model: the buttons are exactly the transmitted valid set,
// nothing client-invented. Submitting returns the UI_ACTION body the
// gateway expects; parameterized actions (waypoint) arm a map click.

import { ActionSpec } from "./envelope.js";

export const ACTION_LABELS: Record<string, string> = {
  request_control: "Request control",
  release_control: "Release control",
  stop: "Stop",
  set_manual: "Manual",
  set_smart_joystick: "Smart joystick",
  set_waypoint: "Waypoint…",
  set_exploration: "Explore",
  start_convoy: "Start convoy",
  stop_convoy: "Stop convoy",
  peeloff: "Peel off",
  restart_node: "Restart node",
};

export interface ActionButton {
  key: string;
  label: string;
  spec: ActionSpec;
  disabled: boolean;
  armsMapClick: boolean; // waypoint placement happens via the map
}

export function actionKey(spec: ActionSpec): string {
  return [spec.tag, spec.robot ?? "", spec.node ?? "", spec.convoy_id ?? ""].join("|");
}

export function buildButtons(actions: ActionSpec[], pending: boolean): ActionButton[] {
  return actions.map((spec) => ({
    key: actionKey(spec),
    label: labelFor(spec),
    spec,
    disabled: pending,
    armsMapClick: spec.tag === "set_waypoint",
  }));
}

function labelFor(spec: ActionSpec): string {
  const base = ACTION_LABELS[spec.tag] ?? spec.tag;
  if (spec.tag === "restart_node") return `Restart ${spec.node} (${spec.robot})`;
  if (spec.robot && spec.tag !== "start_convoy") return `${base} · ${spec.robot}`;
  return base;
}

export function submitPayload(spec: ActionSpec, goal?: [number, number]): Record<string, unknown> {
  const payload: Record<string, unknown> = { ...spec };
  if (spec.tag === "set_waypoint") {
    if (!goal) throw new Error("set_waypoint needs a map click");
    payload["goal"] = [goal[0], goal[1]];
  }
  return payload;
}

export function selectPayload(robots: string[]): Record<string, unknown> {
  return { tag: "select", robots };
}

export function teleopPayload(
  robot: string,
  fwd: number,
  turn: number,
  smart: boolean,
): Record<string, unknown> {
  return { tag: "teleop", robot, fwd, turn, smart };
}
