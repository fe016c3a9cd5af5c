// Wire types mirroring the server's event log and JSON API.

export interface EngineEvent {
	seq: number;
	type:
		| "utterance"
		| "trigger"
		| "thought_created"
		| "thought_evaluated"
		| "decision"
		| "thought_expressed";
	timestep: number;
	wall_time: number;
	agent: string | null;
	payload: Record<string, unknown>;
}

export interface UtteranceView {
	id: string;
	speaker: string;
	text: string;
	timestep: number;
}

export type ThoughtState = "fresh" | "retained" | "expressed" | "discarded";

export interface ThoughtView {
	id: string;
	owner: string;
	text: string;
	system: number;
	stimuli: string[];
	// Badge values are copied verbatim from event payloads, never recomputed.
	saliency: number;
	score: number | null;
	state: ThoughtState;
	expressed: boolean;
}

export interface ParticipantView {
	id: string;
	display_name: string;
	kind: "human" | "agent";
}

export interface ProactivitySettings {
	system1Prob: number;
	imThreshold: number;
	interruptThreshold: number;
	proactiveTone: boolean;
	num_system1_thoughts: number;
	num_system2_thoughts: number;
	saliency_threshold: number;
	saliency_decay: number;
	motivation_growth: number;
	pause_trigger_seconds: number;
	creativity_prob: number;
}

export interface MemoryItemView {
	id?: string;
	kind: string;
	text: string;
	weight: number;
}

export interface FactorView {
	criterion: string;
	reason: string;
}

export interface ReasoningView {
	thought: string;
	raw: number;
	silence_factor: number;
	final: number;
	positive_factors: FactorView[];
	negative_factors: FactorView[];
	distribution: Record<string, number> | null;
}

export interface ConversationSnapshot {
	id: string;
	participants: ParticipantView[];
	transcript: UtteranceView[];
	current_timestep: number;
}
