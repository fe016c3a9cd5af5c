// Client-side state assembled purely from server events.
//
// The store is the UI's single source of truth: the transcript appends only
// on server echo (no optimistic duplicates) and every badge value is copied
// verbatim from the event payload that carried it.

import type { EngineEvent, ThoughtView, UtteranceView } from "./types.js";

export interface PlaygroundState {
	transcript: UtteranceView[];
	thoughts: Map<string, ThoughtView[]>; // agent id -> bubbles, oldest first
	lastEventId: number;
	lastTrigger: string | null;
}

export function initialState(): PlaygroundState {
	return { transcript: [], thoughts: new Map(), lastEventId: 0, lastTrigger: null };
}

function bubblesFor(state: PlaygroundState, agent: string): ThoughtView[] {
	let list = state.thoughts.get(agent);
	if (!list) {
		list = [];
		state.thoughts.set(agent, list);
	}
	return list;
}

function findThought(state: PlaygroundState, agent: string | null, id: string): ThoughtView | undefined {
	if (agent) {
		return state.thoughts.get(agent)?.find((t) => t.id === id);
	}
	for (const list of state.thoughts.values()) {
		const hit = list.find((t) => t.id === id);
		if (hit) return hit;
	}
	return undefined;
}

/** Apply one engine event; returns the same (mutated) state. */
export function apply(state: PlaygroundState, event: EngineEvent): PlaygroundState {
	if (event.seq <= state.lastEventId) {
		return state; // replayed duplicate after a reconnect
	}
	state.lastEventId = event.seq;
	const p = event.payload;
	switch (event.type) {
		case "utterance":
			state.transcript.push({
				id: String(p.id),
				speaker: String(p.speaker),
				text: String(p.text),
				timestep: event.timestep,
			});
			break;
		case "trigger":
			state.lastTrigger = String(p.kind);
			break;
		case "thought_created": {
			if (!event.agent) break;
			bubblesFor(state, event.agent).push({
				id: String(p.id),
				owner: event.agent,
				text: String(p.text),
				system: Number(p.system),
				stimuli: (p.stimuli as string[]) ?? [],
				saliency: p.saliency_at_creation as number,
				score: (p.score as number | null) ?? null,
				state: (p.state as ThoughtView["state"]) ?? "fresh",
				expressed: false,
			});
			break;
		}
		case "thought_evaluated": {
			const thought = findThought(state, event.agent, String(p.thought));
			if (thought) thought.score = p.final as number;
			break;
		}
		case "thought_expressed": {
			const thought = findThought(state, event.agent, String(p.thought));
			if (thought) {
				thought.expressed = true;
				thought.state = "expressed";
				if (p.score !== null && p.score !== undefined) thought.score = p.score as number;
			}
			break;
		}
		case "decision":
			break;
	}
	return state;
}

export function applyAll(state: PlaygroundState, events: EngineEvent[]): PlaygroundState {
	for (const event of events) apply(state, event);
	return state;
}

export function markDiscarded(state: PlaygroundState, agent: string, thoughtId: string): void {
	const thought = findThought(state, agent, thoughtId);
	if (thought && thought.state !== "expressed") thought.state = "discarded";
}

/** Bubbles shown by default: live (fresh/retained) plus expressed ones. */
export function visibleThoughts(state: PlaygroundState, agent: string, showDiscarded: boolean): ThoughtView[] {
	const list = state.thoughts.get(agent) ?? [];
	return showDiscarded ? [...list] : list.filter((t) => t.state !== "discarded");
}

export function discardedCount(state: PlaygroundState, agent: string): number {
	return (state.thoughts.get(agent) ?? []).filter((t) => t.state === "discarded").length;
}

/** Badge text is the exact event-log value rendered as a string. */
export function badgeText(value: number | null): string {
	return value === null ? "–" : String(value);
}
