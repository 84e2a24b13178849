/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Designs a gain certified up to `tau_1` and returns its report as JSON.
     *
     * `tau_1 = 0` gives the plain delay-free design.
     */
    design(tau_1: number, restarts: number): string;
    /**
     * Random instance: `n` states in `blocks` blocks, one sensor per output row.
     */
    constructor(n: number, blocks: number, sensors: number, chords: number, target_rho: number, seed: bigint);
    /**
     * Mean per-step MSE over `trials` runs, `horizon + 1` values.
     */
    simulate(tau_bar: number, heterogeneous: boolean, trials: number, horizon: number): Float64Array;
    spectral_radius_a(): number;
    /**
     * Bound `ρ(Â_τ̄)^{1/(τ̄+1)}` for `τ̄ = 0..=max_tau`, then the exact
     * closed-loop radius under homogeneous and heterogeneous delays, concatenated.
     */
    sweep(max_tau: number): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_design: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number];
    readonly demo_simulate: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demo_spectral_radius_a: (a: number) => [number, number, number];
    readonly demo_sweep: (a: number, b: number) => [number, number, number, number];
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
