/* tslint:disable */
/* eslint-disable */

/**
 * Median action gap against `n` for NVB and LCVB over a few sample paths.
 */
export function gap_curve(h: number, replications: number, seed: number): string;

/**
 * Exact posterior, NVB and LCVB densities plus the three decisions on one synthetic sample.
 */
export function posterior_view(h: number, theta0: number, n: number, seed: number, action: number): string;

/**
 * Closed-form risk `G(a, theta)` over a grid of actions.
 */
export function risk_curve(h: number, b: number, theta: number, a_max: number, points: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly gap_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly posterior_view: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly risk_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
