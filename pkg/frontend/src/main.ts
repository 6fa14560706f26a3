// DOM wiring for the instrument panel. The page is a single PanelApp:
// sliders in, one measurement per click through the busy guard, outputs
// rendered exactly as received (integers, no client-side math).

import { fetchStats, measureOnce, ServiceError } from "./api.js";
import {
  ApiResponse,
  CHANNELS,
  Channel,
  PanelKind,
  PanelState,
  beginSubmit,
  completeSubmit,
  failSubmit,
  initialState,
  setExperiments,
  setLevels,
  setPanel,
  setSparkChannel,
  sparklinePoints,
} from "./state.js";

export interface MountOptions {
  baseUrl?: string;
  fetchFn?: typeof fetch;
  statsIntervalMs?: number; // 0 disables the poll (tests drive it manually)
}

const SPARK_W = 280;
const SPARK_H = 60;

export class PanelApp {
  state: PanelState = initialState();
  private readonly baseUrl: string;
  private readonly fetchFn: typeof fetch;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly root: HTMLElement,
    options: MountOptions = {},
  ) {
    this.baseUrl = options.baseUrl ?? "";
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
    this.buildSkeleton();
    this.render();
    const interval = options.statsIntervalMs ?? 10_000;
    if (interval > 0) {
      this.timer = setInterval(() => void this.pollStats(), interval);
    }
  }

  dispose(): void {
    if (this.timer !== null) clearInterval(this.timer);
  }

  async submit(): Promise<void> {
    const started = beginSubmit(this.state);
    if (started === null) return; // a measurement is already in flight
    this.state = started;
    this.render();
    const levels =
      this.state.panel === "gm"
        ? { r: 0, g: this.state.g, b: 0 }
        : { r: this.state.r, g: this.state.g, b: this.state.b };
    try {
      const response = await measureOnce(this.baseUrl, levels, this.fetchFn);
      this.state = completeSubmit(this.state, response);
    } catch (err) {
      const hint =
        err instanceof ServiceError && err.status === 503
          ? " The instrument queue is busy; try again shortly."
          : "";
      this.state = failSubmit(this.state, `${(err as Error).message}${hint}`);
    }
    this.render();
  }

  async pollStats(): Promise<void> {
    try {
      const stats = await fetchStats(this.baseUrl, this.fetchFn);
      this.state = setExperiments(this.state, stats.experiments);
      this.render();
    } catch {
      // the counter is cosmetic; leave the last value in place
    }
  }

  private buildSkeleton(): void {
    this.root.innerHTML = `
      <header>
        <h1>helios instrument panel</h1>
        <nav>
          <label><input type="radio" name="panel" value="gm"> Green Machine</label>
          <label><input type="radio" name="panel" value="rgb" checked> RGB Machine</label>
        </nav>
      </header>
      <section class="controls">
        <label class="slider slider-r">R
          <input type="range" id="level-r" min="0" max="1" step="0.01">
          <output id="value-r"></output></label>
        <label class="slider slider-g">G
          <input type="range" id="level-g" min="0" max="1" step="0.01">
          <output id="value-g"></output></label>
        <label class="slider slider-b">B
          <input type="range" id="level-b" min="0" max="1" step="0.01">
          <output id="value-b"></output></label>
        <div class="swatch" title="current LED setting"></div>
        <button id="measure">Measure</button>
      </section>
      <div class="banner" hidden></div>
      <section class="outputs"></section>
      <section class="history">
        <label>history channel
          <select class="channel">
            ${CHANNELS.map((c) => `<option value="${c}">${c}</option>`).join("")}
          </select>
        </label>
        <svg class="sparkline" viewBox="0 0 ${SPARK_W} ${SPARK_H}"
             width="${SPARK_W}" height="${SPARK_H}">
          <line x1="0" y1="${SPARK_H}" x2="${SPARK_W}" y2="${SPARK_H}" stroke="#999"></line>
          <polyline fill="none" stroke="#2a7" stroke-width="1.5" points=""></polyline>
        </svg>
      </section>
      <footer class="stats"></footer>
    `;

    this.root.querySelectorAll<HTMLInputElement>("input[name=panel]").forEach((radio) =>
      radio.addEventListener("change", () => {
        this.state = setPanel(this.state, radio.value as PanelKind);
        this.render();
      }),
    );
    for (const key of ["r", "g", "b"] as const) {
      const slider = this.input(`#level-${key}`);
      slider.addEventListener("input", () => {
        this.state = setLevels(this.state, { [key]: Number(slider.value) });
        this.render();
      });
    }
    this.input("#measure").addEventListener("click", () => void this.submit());
    const channel = this.root.querySelector<HTMLSelectElement>(".channel")!;
    channel.addEventListener("change", () => {
      this.state = setSparkChannel(this.state, channel.value as Channel);
      this.render(); // redraw only; no request
    });
  }

  private input(selector: string): HTMLInputElement {
    return this.root.querySelector<HTMLInputElement>(selector)!;
  }

  private render(): void {
    const s = this.state;
    for (const key of ["r", "g", "b"] as const) {
      this.input(`#level-${key}`).value = String(s[key]);
      this.root.querySelector<HTMLOutputElement>(`#value-${key}`)!.textContent =
        s[key].toFixed(2);
      this.root
        .querySelector<HTMLElement>(`.slider-${key}`)!
        .toggleAttribute("hidden", s.panel === "gm" && key !== "g");
    }
    const swatch = this.root.querySelector<HTMLElement>(".swatch")!;
    const to255 = (v: number) => Math.round(v * 255);
    const shown = s.panel === "gm" ? { r: 0, g: s.g, b: 0 } : s;
    swatch.style.backgroundColor = `rgb(${to255(shown.r)}, ${to255(shown.g)}, ${to255(shown.b)})`;

    const button = this.input("#measure");
    button.disabled = s.busy;
    button.textContent = s.busy ? "Measuring…" : "Measure";

    const banner = this.root.querySelector<HTMLElement>(".banner")!;
    banner.hidden = s.error === null;
    banner.textContent = s.error ?? "";

    this.renderOutputs(s.last);
    this.renderSparkline();

    this.root.querySelector<HTMLElement>(".stats")!.textContent =
      s.experiments === null ? "" : `${s.experiments} experiments logged`;
  }

  private renderOutputs(last: ApiResponse | null): void {
    const outputs = this.root.querySelector<HTMLElement>(".outputs")!;
    if (last === null) {
      outputs.innerHTML = "<p>No measurement yet.</p>";
      return;
    }
    if (this.state.panel === "gm") {
      outputs.innerHTML = `<p class="gm-value">515nm: <b>${last.out["515nm"]}</b></p>`;
      return;
    }
    const rows = CHANNELS.map((c) => {
      const highlight = c === this.state.sparkChannel ? ' class="highlight"' : "";
      return `<tr${highlight}><td>${c}</td><td>${last.out[c]}</td></tr>`;
    }).join("");
    outputs.innerHTML = `<table><thead><tr><th>channel</th><th>counts</th></tr></thead><tbody>${rows}</tbody></table>`;
  }

  private renderSparkline(): void {
    const points = sparklinePoints(
      this.state.history,
      this.state.sparkChannel,
      SPARK_W,
      SPARK_H,
    );
    this.root
      .querySelector<SVGPolylineElement>(".sparkline polyline")!
      .setAttribute("points", points.map((p) => `${p.x},${p.y}`).join(" "));
  }
}

export function mount(root: HTMLElement, options: MountOptions = {}): PanelApp {
  return new PanelApp(root, options);
}

declare global {
  interface Window {
    heliosPanel?: PanelApp;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.heliosPanel = mount(document.getElementById("app")!);
}
