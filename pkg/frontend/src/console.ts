// Operator console assembly: selection list, map with waypoint placement,
// dynamically filtered action grid, notification panel, health tab, and a
// virtual joystick. Layout follows the touch-first quadrant arrangement:
// fleet and detail up top, actions and notifications below the map.

import { ActionButton, buildButtons, selectPayload, submitPayload, teleopPayload } from "./actions.js";
import { ActionSpec } from "./envelope.js";
import { GatewayClient, SseBridgeTransport } from "./gateway.js";
import { VirtualJoystick } from "./joystick.js";
import { computeScene, drawScene } from "./map.js";
import { SessionStore } from "./state.js";
import { pixelToWorld } from "./transform.js";

export class ConsoleApp {
  readonly store = new SessionStore();
  readonly client: GatewayClient;
  private armedWaypoint: ActionSpec | null = null;
  private canvas: HTMLCanvasElement;
  private banner: HTMLElement;
  private fleetEl: HTMLElement;
  private detailEl: HTMLElement;
  private actionsEl: HTMLElement;
  private notesEl: HTMLElement;
  private healthEl: HTMLElement;

  constructor(root: HTMLElement) {
    this.client = new GatewayClient(this.store);
    root.innerHTML = `
      <div class="banner hidden" id="banner">connection lost - read only</div>
      <div class="layout">
        <aside class="left">
          <section><h2>Fleet</h2><div id="fleet"></div></section>
          <section><h2>Actions</h2><div id="actions" class="grid"></div></section>
        </aside>
        <main><canvas id="map" width="760" height="560"></canvas></main>
        <aside class="right">
          <section><h2>Active robot</h2><div id="detail"></div></section>
          <section><h2>Notifications</h2><ol id="notes"></ol></section>
          <section><h2>Health</h2><table id="health"></table></section>
        </aside>
      </div>
      <div id="joystick-dock"></div>`;
    this.banner = root.querySelector("#banner")!;
    this.fleetEl = root.querySelector("#fleet")!;
    this.detailEl = root.querySelector("#detail")!;
    this.actionsEl = root.querySelector("#actions")!;
    this.notesEl = root.querySelector("#notes")!;
    this.healthEl = root.querySelector("#health")!;
    this.canvas = root.querySelector("#map")!;
    this.canvas.addEventListener("click", (e) => this.onMapClick(e));
    new VirtualJoystick(root.querySelector("#joystick-dock")!, (s) => {
      const robot = this.store.selection[0];
      if (!robot || !this.store.held.includes(robot)) return;
      if (!s.active && s.fwd === 0 && s.turn === 0) {
        this.client.submit(teleopPayload(robot, 0, 0, false));
        return;
      }
      const smart = this.store.robots.get(robot)?.bt?.mode === "SmartJoystick";
      this.client.submit(teleopPayload(robot, s.fwd, s.turn, smart));
    });
    this.store.onChange(() => this.render());
    this.render();
  }

  connectLive(baseUrl = ""): void {
    this.client.attach(new SseBridgeTransport(this.client, baseUrl));
  }

  private onMapClick(e: MouseEvent): void {
    if (!this.armedWaypoint) return;
    const scene = computeScene(this.store, this.canvas.width, this.canvas.height);
    if (!scene.transform) return;
    const rect = this.canvas.getBoundingClientRect();
    const [wx, wy] = pixelToWorld(scene.transform, e.clientX - rect.left, e.clientY - rect.top);
    this.client.submit(submitPayload(this.armedWaypoint, [wx, wy]));
    this.store.pending = true;
    this.armedWaypoint = null;
    this.render();
  }

  private toggleSelect(id: string): void {
    const selection = this.store.selection.includes(id)
      ? this.store.selection.filter((r) => r !== id)
      : [...this.store.selection, id];
    this.client.submit(selectPayload(selection));
  }

  private press(button: ActionButton): void {
    if (button.disabled) return;
    if (button.armsMapClick) {
      this.armedWaypoint = button.spec;
      this.render();
      return;
    }
    this.client.submit(submitPayload(button.spec));
    this.store.pending = true;
    this.render();
  }

  render(): void {
    this.banner.classList.toggle("hidden", this.store.connected);

    this.fleetEl.innerHTML = "";
    for (const agent of this.store.agents) {
      if (agent.kind !== "robot") continue;
      const view = this.store.robots.get(agent.id);
      const row = document.createElement("button");
      row.className = "fleet-row";
      row.classList.toggle("selected", this.store.selection.includes(agent.id));
      const mode = view?.bt?.mode ?? "?";
      const holder = view?.bt?.authorized ?? "-";
      row.textContent = `${agent.id}  ${mode}  lock:${holder}`;
      row.onclick = () => this.toggleSelect(agent.id);
      this.fleetEl.appendChild(row);
    }

    const active = this.store.selection[0];
    const view = active ? this.store.robots.get(active) : undefined;
    if (active && view?.telemetry) {
      const t = view.telemetry;
      this.detailEl.textContent =
        `${active} · ${t.mode} · pose (${t.pose[0].toFixed(1)}, ${t.pose[1].toFixed(1)})` +
        ` · signal ${t.signal.toFixed(2)} · battery ${t.battery_ok ? "ok" : "LOW"}` +
        ` · operator ${view.bt?.authorized ?? "-"}`;
    } else {
      this.detailEl.textContent = active ? `${active}: waiting for telemetry` : "nothing selected";
    }

    this.actionsEl.innerHTML = "";
    for (const button of buildButtons(this.store.actions, this.store.pending)) {
      const el = document.createElement("button");
      el.className = "action";
      el.classList.toggle("armed", this.armedWaypoint === button.spec);
      el.textContent = button.label;
      el.disabled = button.disabled || !this.store.connected;
      el.onclick = () => this.press(button);
      this.actionsEl.appendChild(el);
    }

    this.notesEl.innerHTML = "";
    for (const note of this.store.orderedNotifications().slice(0, 12)) {
      const li = document.createElement("li");
      li.className = `prio-${note.priority}`;
      li.textContent = `[${note.robot}] ${note.text}`;
      this.notesEl.appendChild(li);
    }

    this.healthEl.innerHTML = "";
    for (const [rid, rv] of this.store.robots) {
      for (const [node, [status, restarts]] of Object.entries(rv.health)) {
        const tr = document.createElement("tr");
        tr.innerHTML = `<td>${rid}</td><td>${node}</td><td class="st-${status}">${status}</td><td>${restarts}</td>`;
        const td = document.createElement("td");
        const spec = this.store.actions.find(
          (a) => a.tag === "restart_node" && a.robot === rid && a.node === node,
        );
        if (spec) {
          const btn = document.createElement("button");
          btn.textContent = "restart";
          btn.onclick = () => this.client.submit(submitPayload(spec));
          td.appendChild(btn);
        }
        tr.appendChild(td);
        this.healthEl.appendChild(tr);
      }
    }

    const ctx = this.canvas.getContext("2d");
    if (ctx) {
      const scene = computeScene(this.store, this.canvas.width, this.canvas.height);
      drawScene(ctx, scene, this.canvas.width, this.canvas.height);
    }
  }
}

declare global {
  interface Window {
    fleetmuxConsole?: ConsoleApp;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const app = new ConsoleApp(document.getElementById("app")!);
  app.connectLive();
  window.fleetmuxConsole = app;
}
