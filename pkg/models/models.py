from enum import Enum, IntEnum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Season(str, Enum):
    SPRING = "spring"
    SUMMER = "summer"
    AUTUMN = "autumn"
    WINTER = "winter"
    SNOW = "snow"


class Light(str, Enum):
    MORNING = "morning"
    DUSK = "dusk"


class Terrain(str, Enum):
    TRAIL1 = "trail1"
    TRAIL2 = "trail2"


class SampleLabel(IntEnum):
    """Action classes; the integer codes are stored in every dataset file."""

    TL = 0
    GS = 1
    TR = 2

    def mirrored(self) -> "SampleLabel":
        if self is SampleLabel.TL:
            return SampleLabel.TR
        if self is SampleLabel.TR:
            return SampleLabel.TL
        return self


class Estimator(str, Enum):
    BIASED = "biased"
    UNBIASED = "unbiased"


class DomainSpec(BaseModel):
    """The knobs that define one visual domain."""

    model_config = ConfigDict(frozen=True)

    domain_id: int = Field(ge=0, le=65535)
    season: Season
    light: Light
    terrain: Terrain
    reality_proxy: bool = False
    noise_sigma: float = Field(0.0, ge=0.0)
    blur_radius: float = Field(0.0, ge=0.0)
    palette_jitter: float = Field(0.0, ge=0.0, le=0.5)


class CameraPose(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    yaw: float
    height: float = Field(gt=0.0)
    pitch: float

    def mirrored(self) -> "CameraPose":
        return self.model_copy(update={"y": -self.y, "yaw": -self.yaw})


class CameraConfig(BaseModel):
    """Rig geometry. Pitch and mounting are not given for the acquisition cameras."""

    model_config = ConfigDict(frozen=True)

    hfov_deg: float = Field(70.0, gt=0.0, lt=170.0)
    pitch_deg: float = 12.0
    max_view_m: float = Field(40.0, gt=1.0)
    rig_offset_deg: float = 30.0


class CaptureConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    image_size: int = Field(32, ge=16)
    world_length_m: float = Field(200.0, gt=0.0)
    triplets_per_world: int = Field(100, ge=1)
    jitter_lateral_frac: float = Field(0.3, ge=0.0, lt=1.0)
    jitter_yaw_deg: float = Field(5.0, ge=0.0, lt=30.0)
    camera: CameraConfig = CameraConfig()


class ControllerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    k_v: float = Field(2.0, gt=0.0)
    k_yaw: float = Field(1.5, gt=0.0)
    v_min: float = Field(0.2, ge=0.0)
    v_max: float = 2.0
    yaw_max: float = Field(1.0, gt=0.0)

    @model_validator(mode="after")
    def check_speed_clamps(self):
        if self.v_max < self.v_min:
            raise ValueError("v_max must be >= v_min")
        return self


class AdaptConfig(BaseModel):
    """Training knobs of the composite objective; lambda_=0 is plain source training."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lambda_: float = Field(1.0, ge=0.0, alias="lambda")
    adapted_layers: tuple[str, ...] = ("fc_feat",)
    batch_per_domain: int = Field(64, ge=2)
    learning_rate: float = Field(0.003, gt=0.0)
    momentum: float = Field(0.75, ge=0.0, lt=1.0)
    lr_step: int = Field(1000, ge=1)
    lr_decay: float = Field(0.5, gt=0.0, le=1.0)
    warmup_iterations: int = Field(0, ge=0)
    # 0 disables clipping
    max_grad_norm: float = Field(0.0, ge=0.0)
    max_iterations: int = Field(1500, ge=1)
    val_interval: int = Field(300, ge=1)
    log_interval: int = Field(50, ge=1)
    kernel_count: int = Field(5, ge=1)
    bandwidth_spread: float = Field(2.0, gt=1.0)
    estimator: Estimator = Estimator.UNBIASED
    per_source_heads: bool = False

    @field_validator("adapted_layers")
    @classmethod
    def check_layers(cls, v):
        unknown = set(v) - {"fc_feat", "fc_out"}
        if unknown:
            raise ValueError(f"unknown adapted layers: {sorted(unknown)}")
        return tuple(layer for layer in ("fc_feat", "fc_out") if layer in v)

    @model_validator(mode="after")
    def check_lambda_layers(self):
        if self.lambda_ > 0 and not self.adapted_layers:
            raise ValueError("adapted_layers must be nonempty when lambda > 0")
        return self


def _split_list(v):
    if isinstance(v, str):
        return [item.strip() for item in v.split(",") if item.strip()]
    return v


class ExperimentConfig(BaseModel):
    """Everything a run needs; parsed from and written back to flat key=value text."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    task: str = "season"
    source_domains: list[str] = []
    target_domains: list[str] = []
    multi_source: bool = False
    data_seed: int = 0
    seeds: list[int] = [0, 1, 2]

    # dataset sizes
    samples_per_source: int = Field(2000, ge=3)
    target_unlabeled: int = Field(2000, ge=2)
    target_val: int = Field(300, ge=1)
    target_test: int = Field(600, ge=1)

    # capture
    image_size: int = Field(32, ge=16)
    world_length_m: float = Field(200.0, gt=0.0)
    triplets_per_world: int = Field(100, ge=1)
    jitter_lateral_frac: float = Field(0.3, ge=0.0, lt=1.0)
    jitter_yaw_deg: float = Field(5.0, ge=0.0)
    camera_hfov_deg: float = Field(70.0, gt=0.0)
    camera_pitch_deg: float = 12.0

    # baseline training (lambda = 0)
    train_lr: float = Field(0.05, gt=0.0)
    train_momentum: float = Field(0.9, ge=0.0, lt=1.0)
    train_iterations: int = Field(3000, ge=1)
    train_warmup: int = Field(200, ge=0)
    train_max_grad_norm: float = Field(5.0, ge=0.0)

    # adaptation
    lambda_: float = Field(1.0, ge=0.0, alias="lambda")
    adapt_lr: float = Field(0.003, gt=0.0)
    adapt_momentum: float = Field(0.75, ge=0.0, lt=1.0)
    adapt_iterations: int = Field(1500, ge=1)
    adapted_layers: list[str] = ["fc_feat"]
    estimator: Estimator = Estimator.UNBIASED
    per_source_heads: bool = False
    kernel_count: int = Field(5, ge=1)
    bandwidth_spread: float = Field(2.0, gt=1.0)

    # shared optimisation
    batch_size: int = Field(64, ge=2)
    lr_step: int = Field(1000, ge=1)
    lr_decay: float = Field(0.5, gt=0.0, le=1.0)
    val_interval: int = Field(300, ge=1)
    log_interval: int = Field(50, ge=1)

    # sweep
    lambda_grid: list[float] = [0.0, 0.1, 1.0, 10.0, 100.0]

    # flight
    fly_episodes: int = Field(20, ge=1)
    fly_max_steps: int = Field(1500, ge=1)
    fly_world_length_m: float = Field(200.0, gt=0.0)
    fly_seed: int = 1000
    dt: float = Field(0.1, gt=0.0)
    k_v: float = Field(2.0, gt=0.0)
    k_yaw: float = Field(1.5, gt=0.0)
    v_min: float = Field(0.2, ge=0.0)
    v_max: float = Field(2.0, ge=0.0)
    yaw_max: float = Field(1.0, gt=0.0)
    failure_margin_frac: float = Field(0.5, ge=0.0)
    dump_frames: bool = False

    @field_validator(
        "source_domains", "target_domains", "seeds", "adapted_layers", "lambda_grid", mode="before"
    )
    @classmethod
    def split_comma_lists(cls, v):
        return _split_list(v)

    @field_validator("lambda_grid")
    @classmethod
    def check_grid(cls, v):
        if not v:
            raise ValueError("lambda_grid must not be empty")
        if len(set(v)) != len(v):
            raise ValueError(f"duplicate values in lambda_grid: {v}")
        if 0.0 not in v:
            raise ValueError("lambda_grid must include 0")
        if any(value < 0 for value in v):
            raise ValueError("lambda_grid values must be >= 0")
        return v

    @field_validator("seeds")
    @classmethod
    def check_seeds(cls, v):
        if not v:
            raise ValueError("seeds must not be empty")
        return v

    def capture_config(self) -> CaptureConfig:
        return CaptureConfig(
            image_size=self.image_size,
            world_length_m=self.world_length_m,
            triplets_per_world=self.triplets_per_world,
            jitter_lateral_frac=self.jitter_lateral_frac,
            jitter_yaw_deg=self.jitter_yaw_deg,
            camera=CameraConfig(hfov_deg=self.camera_hfov_deg, pitch_deg=self.camera_pitch_deg),
        )

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(
            k_v=self.k_v, k_yaw=self.k_yaw, v_min=self.v_min, v_max=self.v_max, yaw_max=self.yaw_max
        )

    def baseline_config(self) -> AdaptConfig:
        return AdaptConfig(
            lambda_=0.0,
            adapted_layers=tuple(self.adapted_layers),
            batch_per_domain=self.batch_size,
            learning_rate=self.train_lr,
            momentum=self.train_momentum,
            lr_step=self.lr_step,
            lr_decay=self.lr_decay,
            warmup_iterations=self.train_warmup,
            max_grad_norm=self.train_max_grad_norm,
            max_iterations=self.train_iterations,
            val_interval=self.val_interval,
            log_interval=self.log_interval,
            kernel_count=self.kernel_count,
            bandwidth_spread=self.bandwidth_spread,
            estimator=self.estimator,
        )

    def adapt_config(self, lambda_: float | None = None) -> AdaptConfig:
        return AdaptConfig(
            lambda_=self.lambda_ if lambda_ is None else lambda_,
            adapted_layers=tuple(self.adapted_layers),
            batch_per_domain=self.batch_size,
            learning_rate=self.adapt_lr,
            momentum=self.adapt_momentum,
            lr_step=self.lr_step,
            lr_decay=self.lr_decay,
            max_iterations=self.adapt_iterations,
            val_interval=self.val_interval,
            log_interval=self.log_interval,
            kernel_count=self.kernel_count,
            bandwidth_spread=self.bandwidth_spread,
            estimator=self.estimator,
            per_source_heads=self.per_source_heads,
        )


class DomainEntry(BaseModel):
    """One registered domain in tasks.yaml."""

    name: str
    spec: DomainSpec


class TaskConfig(BaseModel):
    name: str
    description: str = ""
    # source groups; pooled into one source unless multi_source is set
    sources: dict[str, list[str]]
    target: list[str]
    ablations: dict[str, list[str]] = {}


class TasksConfig(BaseModel):
    domains: list[DomainEntry]
    tasks: dict[str, TaskConfig]

    @model_validator(mode="after")
    def check_references(self):
        names = [d.name for d in self.domains]
        ids = [d.spec.domain_id for d in self.domains]
        if len(set(names)) != len(names) or len(set(ids)) != len(ids):
            raise ValueError("domain names and domain ids must be unique")
        known = set(names)
        for task in self.tasks.values():
            referenced = [n for group in task.sources.values() for n in group] + task.target
            referenced += [n for subset in task.ablations.values() for n in subset]
            missing = sorted(set(referenced) - known)
            if missing:
                raise ValueError(f"task {task.name} references unknown domains: {missing}")
        return self


class MetricsRow(BaseModel):
    task: str
    seed: int
    lambda_: float = Field(alias="lambda")
    estimator: str
    source_set: str
    target: str
    baseline_accuracy: float = Field(ge=0.0, le=1.0)
    adapted_accuracy: float = Field(ge=0.0, le=1.0)
    mean_distance: float | None = None
    median_distance: float | None = None

    model_config = ConfigDict(populate_by_name=True)


class FlightSummaryRow(BaseModel):
    label: str
    episodes: int
    mean_distance: float
    median_distance: float
    failure_rate: float = Field(ge=0.0, le=1.0)
