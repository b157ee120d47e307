// Virtual joystick: drag the knob inside a base circle; axes map to
// (fwd, turn) in [-1, 1]. Emits at a fixed cadence while held so the
// robot's joystick-freshness guard stays satisfied.

export interface JoystickSample {
  fwd: number;
  turn: number;
  active: boolean;
}

export class JoystickModel {
  private baseRadius: number;
  private dx = 0;
  private dy = 0;
  active = false;

  constructor(baseRadius = 60) {
    this.baseRadius = baseRadius;
  }

  start(): void {
    this.active = true;
  }

  move(dxPixels: number, dyPixels: number): void {
    if (!this.active) return;
    const r = Math.hypot(dxPixels, dyPixels);
    const clamp = r > this.baseRadius ? this.baseRadius / r : 1;
    this.dx = dxPixels * clamp;
    this.dy = dyPixels * clamp;
  }

  end(): void {
    this.active = false;
    this.dx = 0;
    this.dy = 0;
  }

  sample(): JoystickSample {
    // screen up (negative dy) is forward; right is positive turn... the
    // platform turns with positive omega counterclockwise, so stick right
    // maps to negative turn
    return {
      fwd: -this.dy / this.baseRadius,
      turn: -this.dx / this.baseRadius,
      active: this.active,
    };
  }

  knobOffset(): [number, number] {
    return [this.dx, this.dy];
  }
}

export class VirtualJoystick {
  readonly model: JoystickModel;
  private container: HTMLDivElement;
  private knob: HTMLDivElement;
  private pointerId: number | null = null;
  private centerX = 0;
  private centerY = 0;
  private timer: number | null = null;

  constructor(
    parent: HTMLElement,
    private onSample: (s: JoystickSample) => void,
    private periodMs = 100,
  ) {
    this.model = new JoystickModel();
    this.container = document.createElement("div");
    this.container.className = "joystick-base";
    this.knob = document.createElement("div");
    this.knob.className = "joystick-knob";
    this.container.appendChild(this.knob);
    parent.appendChild(this.container);
    this.bind();
  }

  private bind(): void {
    this.container.addEventListener("pointerdown", (e) => {
      if (this.pointerId !== null) return;
      this.pointerId = e.pointerId;
      this.container.setPointerCapture(e.pointerId);
      const rect = this.container.getBoundingClientRect();
      this.centerX = rect.left + rect.width / 2;
      this.centerY = rect.top + rect.height / 2;
      this.model.start();
      this.model.move(e.clientX - this.centerX, e.clientY - this.centerY);
      this.render();
      this.timer = window.setInterval(() => this.onSample(this.model.sample()), this.periodMs);
    });
    this.container.addEventListener("pointermove", (e) => {
      if (e.pointerId !== this.pointerId) return;
      this.model.move(e.clientX - this.centerX, e.clientY - this.centerY);
      this.render();
    });
    const release = (e: PointerEvent) => {
      if (e.pointerId !== this.pointerId) return;
      this.pointerId = null;
      this.model.end();
      this.render();
      if (this.timer !== null) {
        window.clearInterval(this.timer);
        this.timer = null;
      }
      this.onSample(this.model.sample()); // final zero sample stops the robot
    };
    this.container.addEventListener("pointerup", release);
    this.container.addEventListener("pointercancel", release);
  }

  private render(): void {
    const [dx, dy] = this.model.knobOffset();
    this.knob.style.transform = `translate(${dx}px, ${dy}px)`;
  }
}
