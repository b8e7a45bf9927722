"""Request and response models for the HTTP service.

Every request embeds a full RunConfig, so a request is as reproducible as a
config file on disk. Responses mirror the dicts the pipeline commands return;
the explanation payload is typed in full because clients build UIs from it.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from ..config import RunConfig

Split = Literal["train", "test"]
Method = Literal["fgns", "knn_baseline"]


class _Payload(BaseModel):
    # several payloads carry model_path / model_checksum fields
    model_config = ConfigDict(protected_namespaces=())


class TrainRequest(_Payload):
    config: RunConfig = Field(default_factory=RunConfig)


class TrainResponse(_Payload):
    model_path: str
    model_checksum: str
    config_hash: str
    dataset_checksum: str
    classes: list[int]
    n_train: int
    n_test: int
    train_accuracy: float
    test_accuracy: float
    epoch_losses: list[float]
    seconds: float


class BuildFeaturesRequest(_Payload):
    config: RunConfig = Field(default_factory=RunConfig)


class ClassCatalogSummary(_Payload):
    n_masks: int
    top_score: float | None


class BuildFeaturesResponse(_Payload):
    catalog_path: str
    prototypes_path: str
    config_hash: str
    model_checksum: str
    dataset_checksum: str
    per_class: dict[str, ClassCatalogSummary]
    fallback_classes: list[int]
    seconds: float


class NeighborPayload(_Payload):
    train_id: int
    score: float


class ExplanationPayload(_Payload):
    format: str
    version: int
    query_id: int
    query_split: Split
    predicted_class: int
    true_class: int | None
    method: Method
    fallback: bool
    neighbors: list[NeighborPayload]
    config_hash: str
    model_checksum: str
    dataset_checksum: str


class ExplainRequest(_Payload):
    config: RunConfig = Field(default_factory=RunConfig)
    query_id: int
    split: Split = "test"
    method: Method = "fgns"
    overlay: bool = False


class ExplainResponse(_Payload):
    explanation: ExplanationPayload
    explanation_path: str
    panel_path: str


class EvaluateRequest(_Payload):
    config: RunConfig = Field(default_factory=RunConfig)


class EvaluateResponse(_Payload):
    report: dict
    report_json_path: str
    report_text_path: str
    histogram_csv_path: str


class RenderRequest(_Payload):
    config: RunConfig = Field(default_factory=RunConfig)
    explanation_path: str
    overlay: bool = False


class RenderResponse(_Payload):
    panel_path: str


class HealthResponse(_Payload):
    status: str
    version: str


class ErrorDetail(_Payload):
    kind: str
    message: str
    exit_code: int


class ErrorResponse(_Payload):
    error: ErrorDetail
