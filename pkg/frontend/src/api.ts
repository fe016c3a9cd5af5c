// Typed client for the conversation server's JSON API.

import type {
	ConversationSnapshot,
	MemoryItemView,
	ProactivitySettings,
	ReasoningView,
	ThoughtView,
	UtteranceView,
} from "./types.js";

export class ApiError extends Error {
	constructor(
		public status: number,
		public detail: string,
	) {
		super(`HTTP ${status}: ${detail}`);
	}
}

export class ApiClient {
	constructor(
		public baseUrl: string,
		private fetchImpl: typeof fetch = fetch,
	) {}

	private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
		const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
			method,
			headers: body === undefined ? {} : { "Content-Type": "application/json" },
			body: body === undefined ? undefined : JSON.stringify(body),
		});
		if (!response.ok) {
			let detail = response.statusText;
			try {
				const data = (await response.json()) as { detail?: unknown };
				if (data.detail) detail = JSON.stringify(data.detail);
			} catch {
				// non-JSON error body
			}
			throw new ApiError(response.status, detail);
		}
		if (response.status === 204) return undefined as T;
		return (await response.json()) as T;
	}

	health(): Promise<{ status: string; conversations: number }> {
		return this.request("GET", "/healthz");
	}

	listConversations(): Promise<{ conversations: { id: string; participants: string[] }[] }> {
		return this.request("GET", "/conversations");
	}

	createConversation(spec: unknown): Promise<ConversationSnapshot> {
		return this.request("POST", "/conversations", spec);
	}

	snapshot(conversationId: string): Promise<ConversationSnapshot> {
		return this.request("GET", `/conversations/${conversationId}`);
	}

	sendMessage(conversationId: string, speaker: string, text: string): Promise<{ utterance: UtteranceView }> {
		return this.request("POST", `/conversations/${conversationId}/messages`, { speaker, text });
	}

	eventsUrl(conversationId: string): string {
		return `${this.baseUrl}/conversations/${conversationId}/events`;
	}

	thoughts(participantId: string): Promise<{ thoughts: ThoughtView[] }> {
		return this.request("GET", `/participants/${participantId}/thoughts`);
	}

	expressThought(thoughtId: string): Promise<{ utterance: UtteranceView; thought: ThoughtView }> {
		return this.request("POST", `/thoughts/${thoughtId}/express`);
	}

	deleteThought(thoughtId: string): Promise<void> {
		return this.request("DELETE", `/thoughts/${thoughtId}`);
	}

	reasoning(thoughtId: string): Promise<ReasoningView> {
		return this.request("GET", `/thoughts/${thoughtId}/reasoning`);
	}

	getMemory(participantId: string): Promise<{ items: MemoryItemView[] }> {
		return this.request("GET", `/participants/${participantId}/memory`);
	}

	putMemory(participantId: string, items: MemoryItemView[]): Promise<{ items: MemoryItemView[] }> {
		return this.request(
			"PUT",
			`/participants/${participantId}/memory`,
			items.map(({ kind, text, weight }) => ({ kind, text, weight })),
		);
	}

	getSettings(participantId: string): Promise<ProactivitySettings> {
		return this.request("GET", `/participants/${participantId}/settings`);
	}

	putSettings(participantId: string, settings: Partial<ProactivitySettings>): Promise<ProactivitySettings> {
		return this.request("PUT", `/participants/${participantId}/settings`, settings);
	}
}
