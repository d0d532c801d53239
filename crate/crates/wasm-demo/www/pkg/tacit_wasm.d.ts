/* tslint:disable */
/* eslint-disable */

/**
 * Belief after each read of a script: `+` misinformation, `-`
 * anti-misinformation, `0` noise. Other characters are skipped.
 */
export function belief_trajectory(start: number, learning_rate: number, impactedness: number, script: string): string;

/**
 * Draw `claims` claims of one veracity and return each claim's virality
 * with its chance of being picked for a tweet.
 */
export function claim_selection(claims: number, veracity: number, seed: number): string;

/**
 * Run a small three-community world and report cascade CCDFs by veracity,
 * the cascade comparison, and cumulative misinformation reads per member
 * of each community.
 */
export function simulate(nodes: number, bot_fraction: number, retweet_scale: number, steps: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly belief_trajectory: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly claim_selection: (a: number, b: number, c: number) => [number, number];
    readonly simulate: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
