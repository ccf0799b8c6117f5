/* tslint:disable */
/* eslint-disable */

/**
 * A Lorenz-96 twin experiment advanced a few cycles at a time.
 */
export class TwinRun {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Runs up to `cycles` analyses; returns how many completed. Stops at the
     * first failure, which is then reported by `failure()`.
     */
    advance(cycles: number): number;
    analysis_rmse(): Float64Array;
    cycles(): number;
    failure(): string | undefined;
    forecast_rmse(): Float64Array;
    mean(): Float64Array;
    member_count(): number;
    /**
     * Member states, member after member.
     */
    members(): Float64Array;
    constructor(filter: string, inflation: number, radius: number, seed: bigint);
    observed_indices(): Uint32Array;
    truth(): Float64Array;
}

export function potential_trace(filter: string, steps: number, inflation: number, radius: number, seed: bigint, warmup: number): Float64Array;

export function taper_curve(family: string, r0: number, conv: string, max_r: number, samples: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_twinrun_free: (a: number, b: number) => void;
    readonly potential_trace: (a: number, b: number, c: number, d: number, e: number, f: bigint, g: number) => [number, number, number, number];
    readonly taper_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly twinrun_advance: (a: number, b: number) => number;
    readonly twinrun_analysis_rmse: (a: number) => [number, number];
    readonly twinrun_cycles: (a: number) => number;
    readonly twinrun_failure: (a: number) => [number, number];
    readonly twinrun_forecast_rmse: (a: number) => [number, number];
    readonly twinrun_mean: (a: number) => [number, number];
    readonly twinrun_member_count: (a: number) => number;
    readonly twinrun_members: (a: number) => [number, number];
    readonly twinrun_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly twinrun_observed_indices: (a: number) => [number, number];
    readonly twinrun_truth: (a: number) => [number, number];
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
