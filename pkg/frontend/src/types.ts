/**
 * JSON schema shared with the rating service. The client renders only the
 * fields listed here; nothing in any payload names the method behind an arm.
 */

export type TargetClass = "scar" | "mvo";
export type Arm = "A" | "B";

export const RATING_CATEGORIES = [
  "optimal",
  "too_big",
  "too_small",
  "wrong_organ",
  "false_negative",
  "false_positive",
  "true_negative",
] as const;
export type RatingCategory = (typeof RATING_CATEGORIES)[number];

export type ComparisonChoice = "A" | "B" | "equal";

export interface TaskImages {
  base: string; // base64 PNG
  overlay_a: string;
  overlay_b: string;
}

export interface Task {
  patient_id: string;
  slice_index: number;
  n_slices: number;
  classes: TargetClass[];
  arms: Arm[];
  images: TaskImages;
}

export interface Progress {
  position: number;
  total: number;
}

export interface TaskPayload {
  done: boolean;
  cursor: number;
  task?: Task;
  progress: Progress;
}

/** The rater's own latest submissions for one slice (resume/revision). */
export interface SliceState {
  ratings: Record<TargetClass, Record<Arm, RatingCategory | null>>;
  comparisons: Record<TargetClass, ComparisonChoice | null>;
}

export interface RatingSubmission {
  rater_id: string;
  patient_id: string;
  slice_index: number;
  target_class: TargetClass;
  arm: Arm;
  category: RatingCategory;
}

export interface ComparisonSubmission {
  rater_id: string;
  patient_id: string;
  slice_index: number;
  target_class: TargetClass;
  choice: ComparisonChoice;
}

export interface Ack {
  seq: number;
  timestamp: string;
}

export function emptySliceState(): SliceState {
  return {
    ratings: {
      scar: { A: null, B: null },
      mvo: { A: null, B: null },
    },
    comparisons: { scar: null, mvo: null },
  };
}
