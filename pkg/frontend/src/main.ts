// Playground bootstrap: join (or create) a conversation, subscribe to its
// event stream, and wire the three panes plus the settings drawer.

import { ApiClient, ApiError } from "./api.js";
import { subscribe } from "./sse.js";
import { apply, initialState, markDiscarded, type PlaygroundState } from "./store.js";
import type { EngineEvent, ParticipantView, ProactivitySettings } from "./types.js";
import { SETTING_RANGES, validateMemoryItem, validateSettings } from "./validate.js";
import {
	renderParticipantTabs,
	renderReasoning,
	renderThoughtPane,
	renderTranscript,
	showInlineError,
} from "./view.js";

const DEFAULT_CONVERSATION = {
	participants: [
		{ id: "you", display_name: "You", kind: "human" },
		{
			id: "ava",
			display_name: "Ava",
			kind: "agent",
			persona: ["I am a yoga instructor.", "I love hiking in the mountains."],
			proactivity: { imThreshold: 3.59, interruptThreshold: 4.8, system1Prob: 0.2 },
		},
		{
			id: "ben",
			display_name: "Ben",
			kind: "agent",
			persona: ["I write songs on the weekend.", "I collect vinyl records."],
			proactivity: { imThreshold: 3.95, interruptThreshold: 4.8, system1Prob: 0.1 },
		},
	],
	provider: { kind: "mock", synthesize: true, seed: 0 },
};

function byId(id: string): HTMLElement {
	const node = document.getElementById(id);
	if (!node) throw new Error(`missing element #${id}`);
	return node;
}

async function boot(): Promise<void> {
	const params = new URLSearchParams(location.search);
	const api = new ApiClient(params.get("api") ?? "http://127.0.0.1:8000");
	const state: PlaygroundState = initialState();

	const existing = await api.listConversations();
	const conversationId =
		params.get("conversation") ??
		existing.conversations[0]?.id ??
		(await api.createConversation(DEFAULT_CONVERSATION)).id;
	const snapshot = await api.snapshot(conversationId);
	const participants: ParticipantView[] = snapshot.participants;
	const names = new Map(participants.map((p) => [p.id, p.display_name]));
	const human = participants.find((p) => p.kind === "human")?.id ?? participants[0].id;
	let selectedAgent = participants.find((p) => p.kind === "agent")?.id ?? participants[0].id;
	let showDiscarded = false;

	const transcriptPane = byId("transcript");
	const thoughtPane = byId("thoughts");
	const memoryPane = byId("memory-items");
	const reasoningPane = byId("reasoning");
	const statusBar = byId("status");
	const errorBar = byId("error-bar");

	const rerender = (): void => {
		renderTranscript(transcriptPane, state, names);
		renderThoughtPane(thoughtPane, state, selectedAgent, showDiscarded, {
			onExpress: (thought) => {
				void api.expressThought(thought.id).catch((err: unknown) => {
					showInlineError(errorBar,
						err instanceof ApiError && err.status === 409
							? "already expressed"
							: String(err));
				});
			},
			onDelete: (thought) => {
				void api
					.deleteThought(thought.id)
					.then(() => {
						markDiscarded(state, selectedAgent, thought.id);
						rerender();
					})
					.catch((err: unknown) => showInlineError(errorBar, String(err)));
			},
			onReasoning: (thought) => {
				void api
					.reasoning(thought.id)
					.then((reasoning) => renderReasoning(reasoningPane, reasoning))
					.catch((err: unknown) =>
						showInlineError(errorBar,
							err instanceof ApiError && err.status === 404
								? "no evaluation for this thought yet"
								: String(err)));
			},
		});
	};

	renderParticipantTabs(byId("agent-tabs"), participants, selectedAgent, (id) => {
		selectedAgent = id;
		renderParticipantTabs(byId("agent-tabs"), participants, selectedAgent, () => undefined);
		void refreshAgentPanes();
		rerender();
	});

	// -- send box (no optimistic append: the transcript waits for the echo) --
	const input = byId("message-input") as HTMLInputElement;
	byId("send-form").onsubmit = (ev) => {
		ev.preventDefault();
		const text = input.value.trim();
		if (!text) return;
		input.value = "";
		void api.sendMessage(conversationId, human, text).catch((err: unknown) => {
			showInlineError(errorBar, String(err));
			input.value = text;
		});
	};

	// -- settings drawer --
	const settingsForm = byId("settings-form") as HTMLFormElement;
	const settingsError = byId("settings-error");

	const loadSettings = async (): Promise<void> => {
		const settings = await api.getSettings(selectedAgent);
		for (const [name, rule] of Object.entries(SETTING_RANGES)) {
			const field = settingsForm.elements.namedItem(name) as HTMLInputElement | null;
			if (!field) continue;
			field.min = String(rule.min);
			field.max = String(rule.max);
			field.step = String(rule.step);
			field.value = String(settings[name as keyof ProactivitySettings]);
		}
		const tone = settingsForm.elements.namedItem("proactiveTone") as HTMLInputElement;
		tone.checked = Boolean(settings.proactiveTone);
	};

	settingsForm.onsubmit = (ev) => {
		ev.preventDefault();
		const update: Record<string, number | boolean> = {};
		for (const name of Object.keys(SETTING_RANGES)) {
			const field = settingsForm.elements.namedItem(name) as HTMLInputElement | null;
			if (field) {
				update[name] = field.step === "1" ? parseInt(field.value, 10) : parseFloat(field.value);
			}
		}
		update.proactiveTone = (settingsForm.elements.namedItem("proactiveTone") as HTMLInputElement).checked;
		const problems = validateSettings(update as Partial<ProactivitySettings>);
		if (problems.length > 0) {
			showInlineError(settingsError, problems.join("; "));
			return;
		}
		void api
			.putSettings(selectedAgent, update as Partial<ProactivitySettings>)
			.then(() => showInlineError(settingsError, ""))
			.catch((err: unknown) =>
				showInlineError(settingsError, err instanceof ApiError ? err.detail : String(err)));
	};

	// -- memory editor --
	const refreshMemory = async (): Promise<void> => {
		const { items } = await api.getMemory(selectedAgent);
		memoryPane.replaceChildren(
			...items.map((item) => {
				const row = document.createElement("div");
				row.className = "memory-item";
				row.textContent = `(${item.kind}, w=${item.weight}) ${item.text}`;
				const remove = document.createElement("button");
				remove.textContent = "×";
				remove.onclick = () => {
					void api
						.putMemory(selectedAgent, items.filter((other) => other.id !== item.id))
						.then(refreshMemory)
						.catch((err: unknown) => showInlineError(errorBar, String(err)));
				};
				row.append(remove);
				return row;
			}),
		);
	};

	byId("memory-form").onsubmit = (ev) => {
		ev.preventDefault();
		const text = (byId("memory-text") as HTMLInputElement).value;
		const weight = parseFloat((byId("memory-weight") as HTMLInputElement).value || "1");
		const kind = (byId("memory-kind") as HTMLSelectElement).value;
		const problems = validateMemoryItem({ text, weight });
		if (problems.length > 0) {
			showInlineError(errorBar, problems.join("; "));
			return;
		}
		void api
			.getMemory(selectedAgent)
			.then(({ items }) => api.putMemory(selectedAgent, [...items, { kind, text, weight }]))
			.then(() => {
				(byId("memory-text") as HTMLInputElement).value = "";
				showInlineError(errorBar, "");
				return refreshMemory();
			})
			.catch((err: unknown) => showInlineError(errorBar, String(err)));
	};

	const refreshAgentPanes = async (): Promise<void> => {
		await Promise.all([loadSettings(), refreshMemory()]);
	};

	byId("toggle-discarded").onclick = () => {
		showDiscarded = !showDiscarded;
		byId("toggle-discarded").textContent = showDiscarded ? "hide discarded" : "show discarded";
		rerender();
	};

	// -- live event stream --
	subscribe(
		api.eventsUrl(conversationId),
		(message) => {
			const event = JSON.parse(message.data) as EngineEvent;
			apply(state, event);
			rerender();
		},
		{
			onStatus: (status) => {
				statusBar.textContent = status === "connected" ? `live · ${conversationId}` : status;
			},
		},
	);

	await refreshAgentPanes();
	rerender();
}

void boot().catch((err: unknown) => {
	document.body.insertAdjacentText("afterbegin", `failed to start playground: ${String(err)}`);
});
