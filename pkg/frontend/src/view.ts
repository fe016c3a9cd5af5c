// DOM rendering for the three panes and the settings drawer.
//
// Rendering is dumb on purpose: every number shown comes verbatim from the
// store (which copied it from the event log); nothing is recomputed here.

import { badgeText, discardedCount, visibleThoughts, type PlaygroundState } from "./store.js";
import type { ParticipantView, ReasoningView, ThoughtView } from "./types.js";

export interface ThoughtHandlers {
	onExpress: (thought: ThoughtView) => void;
	onDelete: (thought: ThoughtView) => void;
	onReasoning: (thought: ThoughtView) => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
	tag: K,
	className?: string,
	text?: string,
): HTMLElementTagNameMap[K] {
	const node = document.createElement(tag);
	if (className) node.className = className;
	if (text !== undefined) node.textContent = text;
	return node;
}

export function renderTranscript(
	container: HTMLElement,
	state: PlaygroundState,
	names: Map<string, string>,
): void {
	const stick = container.scrollTop + container.clientHeight >= container.scrollHeight - 8;
	container.replaceChildren(
		...state.transcript.map((utt) => {
			const row = el("div", "utterance");
			row.dataset.utteranceId = utt.id;
			row.append(
				el("span", "speaker", names.get(utt.speaker) ?? utt.speaker),
				el("span", "text", utt.text),
				el("span", "timestep", `t${utt.timestep}`),
			);
			return row;
		}),
	);
	if (stick) container.scrollTop = container.scrollHeight;
}

export function renderThoughtPane(
	container: HTMLElement,
	state: PlaygroundState,
	agent: string,
	showDiscarded: boolean,
	handlers: ThoughtHandlers,
): void {
	const bubbles = visibleThoughts(state, agent, showDiscarded);
	const hidden = discardedCount(state, agent);
	container.replaceChildren();
	for (const thought of bubbles) {
		container.append(renderBubble(thought, handlers));
	}
	if (!showDiscarded && hidden > 0) {
		container.append(el("div", "discarded-note", `${hidden} discarded thought(s) hidden`));
	}
	if (bubbles.length === 0) {
		container.append(el("div", "empty-note", "no thoughts yet"));
	}
}

function renderBubble(thought: ThoughtView, handlers: ThoughtHandlers): HTMLElement {
	const bubble = el("div", "thought" + (thought.expressed ? " expressed" : "") +
		(thought.state === "discarded" ? " discarded" : ""));
	bubble.dataset.thoughtId = thought.id;
	bubble.title = "click to force-express this thought";

	const badges = el("div", "badges");
	badges.append(
		el("span", "badge id", thought.id),
		el("span", "badge saliency", badgeText(thought.saliency)),
		el("span", "badge motivation", badgeText(thought.score)),
		el("span", "badge system", `S${thought.system}`),
	);
	const chips = el("div", "stimuli");
	for (const ref of thought.stimuli) {
		const chip = el("span", "chip", ref);
		chip.dataset.stimulusRef = ref;
		chips.append(chip);
	}
	const controls = el("div", "controls");
	const reasonBtn = el("button", "reason-btn", "reasoning");
	reasonBtn.onclick = (ev) => {
		ev.stopPropagation();
		handlers.onReasoning(thought);
	};
	const deleteBtn = el("button", "delete-btn", "×");
	deleteBtn.title = "discard this thought";
	deleteBtn.onclick = (ev) => {
		ev.stopPropagation();
		handlers.onDelete(thought);
	};
	controls.append(reasonBtn, deleteBtn);

	bubble.append(badges, el("div", "thought-text", thought.text), chips, controls);
	bubble.onclick = () => handlers.onExpress(thought);
	return bubble;
}

export function renderReasoning(container: HTMLElement, reasoning: ReasoningView): void {
	container.replaceChildren(
		el("h3", undefined, `why ${reasoning.thought} scored ${badgeText(reasoning.final)}`),
		el("div", "score-detail",
			`raw ${badgeText(reasoning.raw)} × silence ${badgeText(reasoning.silence_factor)}`),
	);
	const pos = el("div", "factors positive");
	pos.append(el("h4", undefined, "for expressing"));
	for (const f of reasoning.positive_factors.slice(0, 2)) {
		pos.append(el("div", "factor", `${f.criterion}: ${f.reason}`));
	}
	const neg = el("div", "factors negative");
	neg.append(el("h4", undefined, "against expressing"));
	for (const f of reasoning.negative_factors.slice(0, 2)) {
		neg.append(el("div", "factor", `${f.criterion}: ${f.reason}`));
	}
	container.append(pos, neg);
	if (reasoning.distribution) {
		const dist = el("div", "distribution");
		dist.append(el("h4", undefined, "rating distribution"));
		for (const [rating, probability] of Object.entries(reasoning.distribution)) {
			const row = el("div", "dist-row");
			const bar = el("span", "dist-bar");
			bar.style.width = `${Math.round(probability * 140)}px`;
			row.append(el("span", "dist-label", rating), bar,
				el("span", "dist-value", String(probability)));
			dist.append(row);
		}
		container.append(dist);
	}
	(container as HTMLDialogElement).style.display = "block";
}

export function renderParticipantTabs(
	container: HTMLElement,
	participants: ParticipantView[],
	selected: string,
	onSelect: (id: string) => void,
): void {
	container.replaceChildren(
		...participants
			.filter((p) => p.kind === "agent")
			.map((p) => {
				const tab = el("button", "tab" + (p.id === selected ? " active" : ""), p.display_name);
				tab.onclick = () => onSelect(p.id);
				return tab;
			}),
	);
}

export function showInlineError(container: HTMLElement, message: string): void {
	container.textContent = message;
	container.style.display = message ? "block" : "none";
}
