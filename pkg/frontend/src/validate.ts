// Client-side mirror of the server's proactivity ranges, for inline feedback
// before the PUT round-trip (the server's 422 stays authoritative).

import type { ProactivitySettings } from "./types.js";

export interface RangeRule {
	min: number;
	max: number;
	step: number;
}

export const SETTING_RANGES: Record<string, RangeRule> = {
	system1Prob: { min: 0, max: 1, step: 0.01 },
	imThreshold: { min: 1, max: 5, step: 0.01 },
	interruptThreshold: { min: 1, max: 5, step: 0.01 },
	num_system1_thoughts: { min: 0, max: 8, step: 1 },
	num_system2_thoughts: { min: 0, max: 8, step: 1 },
	pause_trigger_seconds: { min: 1, max: 120, step: 1 },
};

export function validateSettings(settings: Partial<ProactivitySettings>): string[] {
	const errors: string[] = [];
	for (const [name, rule] of Object.entries(SETTING_RANGES)) {
		const value = settings[name as keyof ProactivitySettings];
		if (typeof value !== "number" || Number.isNaN(value)) continue;
		if (value < rule.min || value > rule.max) {
			errors.push(`${name} must be between ${rule.min} and ${rule.max}`);
		}
	}
	const im = settings.imThreshold;
	const interrupt = settings.interruptThreshold;
	if (typeof im === "number" && typeof interrupt === "number" && im > interrupt) {
		errors.push("imThreshold must not exceed interruptThreshold");
	}
	return errors;
}

export function validateMemoryItem(item: { text: string; weight: number }): string[] {
	const errors: string[] = [];
	if (!item.text.trim()) errors.push("memory text must not be empty");
	if (!(item.weight > 0)) errors.push("weight must be > 0");
	return errors;
}
