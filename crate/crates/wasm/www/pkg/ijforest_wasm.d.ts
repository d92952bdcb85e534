/* tslint:disable */
/* eslint-disable */

/**
 * Mean forest prediction on a `resolution²` grid when every label is an
 * independent Bernoulli(`p`) draw, so any structure in the map is bias.
 */
export function bias_grid(mode: string, n: number, s: number, b: number, resolution: number, replicates: number, p: number, seed: bigint): string;

/**
 * Exact jackknife variance of the subsample-mean learner by enumeration,
 * next to plug-in and bias-corrected Monte Carlo estimates.
 */
export function jackknife_oracle(labels: string, s: number, b: number, seed: bigint): string;

/**
 * Trains a forest on the two-dimensional cosine surface and predicts along
 * `x1 ∈ [0, 1]` at fixed `x2`, with jackknife intervals.
 */
export function prediction_slice(mode: string, n: number, b: number, noise_sd: number, x2: number, points: number, level: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly bias_grid: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly jackknife_oracle: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly prediction_slice: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
