// Payload shapes of the triage service JSON API.

export type ItemStatus = 'pending' | 'accepted' | 'annotated';

export interface QueueItemDto {
  item_id: string;
  image_id: string;
  status: ItemStatus;
  dims: [number, number, number, number]; // T, C, H, W
  class_names: string[];
  background_index: number;
  blob_sha256: string;
  class_uncertainties: (number | null)[];
  pixel_counts: number[];
  mean_entropy: number;
  true_mean_dice: number | null;
  predicted_mean_dice: number | null;
  predicted_mean_dice_clamped: number | null;
  decided_by: string | null;
  decided_at: string | null;
  corrected_label_sha256: string | null;
}

export interface QueueDto {
  items: QueueItemDto[];
  count: number;
}

export interface ModelDto {
  model: {
    r_squared: number;
    adj_r_squared: number;
    included_predictors: number[];
    intercept: number;
    coefficients: number[];
    n_observations: number;
  };
  model_version: number;
}

export interface MetricsDto {
  total: number;
  by_status: { pending: number; accepted: number; annotated: number };
  model_version: number;
  model_r_squared: number | null;
  pending_mean_predicted_dice: number | null;
  pending_mean_true_dice: number | null;
}

export interface ApiError {
  code: string;
  message: string;
  details?: unknown;
}
