// Panel state and pure transitions. Everything here is side-effect free so
// the busy guard, the history ring and the sparkline geometry are testable
// without a DOM.

export const CHANNELS = [
  "415nm", "445nm", "480nm", "515nm", "555nm",
  "590nm", "630nm", "680nm", "clear", "nir",
] as const;

export type Channel = (typeof CHANNELS)[number];

export interface ApiResponse {
  in: { R: number; G: number; B: number };
  out: Record<Channel, number>;
}

export type PanelKind = "gm" | "rgb";

export const HISTORY_LIMIT = 50;

export interface PanelState {
  r: number;
  g: number;
  b: number;
  panel: PanelKind;
  busy: boolean;
  last: ApiResponse | null;
  history: ApiResponse[];
  error: string | null;
  sparkChannel: Channel;
  experiments: number | null;
}

export function initialState(): PanelState {
  return {
    r: 0,
    g: 0.5,
    b: 0,
    panel: "rgb",
    busy: false,
    last: null,
    history: [],
    error: null,
    sparkChannel: "515nm",
    experiments: null,
  };
}

/** Start a submission; returns null while one is already in flight. */
export function beginSubmit(state: PanelState): PanelState | null {
  if (state.busy) return null;
  return { ...state, busy: true, error: null };
}

/** Record a successful measurement, keeping at most HISTORY_LIMIT entries. */
export function completeSubmit(state: PanelState, response: ApiResponse): PanelState {
  const history = [...state.history, response].slice(-HISTORY_LIMIT);
  return { ...state, busy: false, error: null, last: response, history };
}

/** A failed submission leaves the measurement state untouched. */
export function failSubmit(state: PanelState, message: string): PanelState {
  return { ...state, busy: false, error: message };
}

export function setLevels(state: PanelState, levels: Partial<Pick<PanelState, "r" | "g" | "b">>): PanelState {
  return { ...state, ...levels };
}

export function setPanel(state: PanelState, panel: PanelKind): PanelState {
  return { ...state, panel };
}

export function setSparkChannel(state: PanelState, channel: Channel): PanelState {
  return { ...state, sparkChannel: channel };
}

export function setExperiments(state: PanelState, count: number): PanelState {
  return { ...state, experiments: count };
}

export interface Point {
  x: number;
  y: number;
}

/**
 * Sparkline geometry: one point per measurement in submission order,
 * spread across the width, counts scaled into the height with 0 at the
 * bottom edge. An empty history yields no points (an empty axis).
 */
export function sparklinePoints(
  history: ApiResponse[],
  channel: Channel,
  width: number,
  height: number,
): Point[] {
  const counts = history.map((r) => r.out[channel]);
  if (counts.length === 0) return [];
  const top = Math.max(...counts, 1);
  const step = counts.length > 1 ? width / (counts.length - 1) : 0;
  return counts.map((c, i) => ({
    x: counts.length > 1 ? i * step : width / 2,
    y: height - (c / top) * height,
  }));
}
