// Server-sent-events reader on top of fetch streaming, so it runs both in
// browsers and under node (no global EventSource needed). Reconnects
// automatically, resuming from the last seen event id.

export interface SseMessage {
	id: number | null;
	event: string;
	data: string;
}

/** Incremental parser for one SSE byte stream. */
export class SseParser {
	private buffer = "";

	push(chunk: string): SseMessage[] {
		this.buffer += chunk.replace(/\r\n/g, "\n");
		const messages: SseMessage[] = [];
		let sep = this.buffer.indexOf("\n\n");
		while (sep >= 0) {
			const block = this.buffer.slice(0, sep);
			this.buffer = this.buffer.slice(sep + 2);
			const parsed = this.parseBlock(block);
			if (parsed) messages.push(parsed);
			sep = this.buffer.indexOf("\n\n");
		}
		return messages;
	}

	private parseBlock(block: string): SseMessage | null {
		let id: number | null = null;
		let event = "message";
		const data: string[] = [];
		for (const line of block.split("\n")) {
			if (line.startsWith(":")) continue; // heartbeat comment
			const colon = line.indexOf(":");
			if (colon < 0) continue;
			const field = line.slice(0, colon);
			const value = line.slice(colon + 1).replace(/^ /, "");
			if (field === "id") id = Number(value);
			else if (field === "event") event = value;
			else if (field === "data") data.push(value);
		}
		if (data.length === 0) return null;
		return { id, event, data: data.join("\n") };
	}
}

export interface StreamOptions {
	headers?: Record<string, string>;
	retryMs?: number;
	fetchImpl?: typeof fetch;
	onStatus?: (status: "connected" | "reconnecting" | "closed") => void;
}

/**
 * Subscribe to an SSE endpoint. Returns a stop function. On any disconnect
 * the stream reopens with a Last-Event-ID header so no events are lost or
 * duplicated.
 */
export function subscribe(
	url: string,
	onMessage: (message: SseMessage) => void,
	options: StreamOptions = {},
): () => void {
	const fetchImpl = options.fetchImpl ?? fetch;
	const retryMs = options.retryMs ?? 1000;
	let lastEventId = 0;
	let stopped = false;
	let controller: AbortController | null = null;

	const loop = async (): Promise<void> => {
		while (!stopped) {
			controller = new AbortController();
			try {
				const response = await fetchImpl(url, {
					headers: {
						Accept: "text/event-stream",
						...(lastEventId ? { "Last-Event-ID": String(lastEventId) } : {}),
						...(options.headers ?? {}),
					},
					signal: controller.signal,
				});
				if (!response.ok || !response.body) {
					throw new Error(`event stream returned ${response.status}`);
				}
				options.onStatus?.("connected");
				const reader = response.body.getReader();
				const decoder = new TextDecoder();
				const parser = new SseParser();
				for (;;) {
					const { done, value } = await reader.read();
					if (done) break;
					for (const message of parser.push(decoder.decode(value, { stream: true }))) {
						if (message.id !== null) lastEventId = message.id;
						onMessage(message);
					}
				}
			} catch (err) {
				if (stopped) break;
			}
			if (!stopped) {
				options.onStatus?.("reconnecting");
				await new Promise((resolve) => setTimeout(resolve, retryMs));
			}
		}
		options.onStatus?.("closed");
	};

	void loop();
	return () => {
		stopped = true;
		controller?.abort();
	};
}
