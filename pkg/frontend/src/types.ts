export interface TaskItem {
  id: string;
  image_url: string;
}

export interface TaskView {
  task_id: string;
  kind: "set" | "point";
  question_text: string;
  negated: boolean;
  group: string;
  items: TaskItem[];
  status: string;
  required_assignments: number;
  answers_received: number;
  attributes?: string[];
  options?: Record<string, string[]>;
}

export type Answer = "yes" | "no" | Record<string, string>;

export interface SubmitOutcome {
  kind: "accepted" | "canceled" | "rejected";
  status?: string;
  remaining?: number;
  reason?: string;
}

export interface SessionTasks {
  published: number;
  pending: number;
  resolved: number;
  canceled: number;
  canceled_answered: number;
}

export interface SessionSnapshot {
  session_id: string;
  algorithm: string;
  status: "running" | "done" | "failed";
  tasks: SessionTasks;
  assignments: number;
  cnt: number | null;
  verdict: Record<string, unknown> | null;
  error: string | null;
}
