"""Pydantic schemas for config fragments and written artifacts."""

from typing import Annotated, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Auto = Literal["auto"]


class StrictModel(BaseModel):
    """Base model rejecting unknown keys."""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class BoxCoxParams(StrictModel):
    """Box-Cox stage parameters."""
    lambda_: float = Field(1.0, alias="lambda", ge=0.0)


class AffineParams(StrictModel):
    """Affine stage parameters."""
    a: float = 0.0
    b: float = 1.0

    @field_validator("b")
    @classmethod
    def _nonzero_scale(cls, b: float) -> float:
        if b == 0.0:
            raise ValueError("affine scale b must be nonzero")
        return b


class BoxCoxStage(StrictModel):
    """Warping stage {kind: "boxcox"}."""
    kind: Literal["boxcox"]
    params: BoxCoxParams = BoxCoxParams()
    fixed: List[Literal["lambda"]] = []


class AffineStage(StrictModel):
    """Warping stage {kind: "affine"}."""
    kind: Literal["affine"]
    params: AffineParams = AffineParams()
    fixed: List[Literal["a", "b"]] = []


WarpingStage = Annotated[Union[BoxCoxStage, AffineStage], Field(discriminator="kind")]


class SquaredExponentialSpec(StrictModel):
    """Squared-exponential kernel plus white noise."""
    type: Literal["squared_exponential"]
    variance: Union[float, Auto] = "auto"
    lengthscale: Union[float, Auto] = "auto"
    noise: Union[float, Auto] = "auto"
    fixed: List[Literal["variance", "lengthscale", "noise"]] = []


class SpectralMixtureSpec(StrictModel):
    """Q-component spectral mixture kernel plus white noise."""
    type: Literal["spectral_mixture"]
    components: int = Field(2, ge=1)
    weights: Union[List[float], Auto] = "auto"
    means: Union[List[float], Auto] = "auto"
    variances: Union[List[float], Auto] = "auto"
    noise: Union[float, Auto] = "auto"
    fixed: List[str] = []

    @model_validator(mode="after")
    def _component_lengths(self) -> "SpectralMixtureSpec":
        for name in ("weights", "means", "variances"):
            value = getattr(self, name)
            if value != "auto" and len(value) != self.components:
                raise ValueError(f"{name} has {len(value)} entries, expected {self.components}")
        return self


KernelSpec = Annotated[Union[SquaredExponentialSpec, SpectralMixtureSpec], Field(discriminator="type")]


class MeanSpec(StrictModel):
    """Base-GP mean function."""
    type: Literal["zero", "constant"] = "constant"
    value: Union[float, Auto] = "auto"
    fixed: bool = False


class OptimizerSpec(StrictModel):
    """Training method and its budgets."""
    method: Literal["bfgs", "powell", "bfgs-powell", "mcmc"] = "bfgs-powell"
    tol: float = Field(1e-6, gt=0.0)
    max_iter: int = Field(1000, ge=1)
    rounds: int = Field(2, ge=1)
    powell_span: float = Field(5.0, gt=0.0)
    walkers: Optional[int] = Field(None, ge=4)
    steps: int = Field(500, ge=1)
    stretch: float = Field(2.0, gt=1.0)
    burn_in: float = Field(0.5, ge=0.0, lt=1.0)
    ball_radius: float = Field(0.1, gt=0.0)


class ModelSpec(StrictModel):
    """One named model variant: warping, kernel, mean and training method."""
    warping: List[WarpingStage] = []
    kernel: KernelSpec
    mean: MeanSpec = MeanSpec()
    optimizer: OptimizerSpec = OptimizerSpec()


class ScoreSet(StrictModel):
    """Point and density scores on one test set."""
    mae: float
    mse: float
    nlpd: float


class ScoreReport(StrictModel):
    """Scores of one model variant on one regime (reconstruction or forecast)."""
    mae: float
    mse: float
    nlpd: float
    mae_gh_mean: Optional[float] = None
    mse_gh_mean: Optional[float] = None
    nll: float
    n_train: int
    n_test: int
    seed: int
    config_hash: str


class VariantReport(StrictModel):
    """Evaluation of one model variant."""
    method: str
    nll: float
    nfev: int
    reconstruction: Optional[ScoreReport] = None
    forecast: Optional[ScoreReport] = None


class EvaluationReport(StrictModel):
    """Table-shaped evaluation over all configured variants."""
    seed: int
    config_hash: str
    n_train: int
    models: Dict[str, VariantReport]


class FitReport(StrictModel):
    """Outcome of training one variant."""
    model: str
    method: str
    final_nll: float
    nfev: int
    wall_time: float
    termination: str


class FittedModelFile(StrictModel):
    """Self-contained fitted model: structure, fitted values and training data."""
    warping: List[WarpingStage]
    kernel: KernelSpec
    mean: MeanSpec
    train_t: List[float]
    train_y: List[float]
    nll: float
    method: str


class ChainSummary(StrictModel):
    """Posterior summary of an ensemble MCMC chain after burn-in."""
    names: List[str]
    mean: List[float]
    std: List[float]
    quantiles: Dict[str, List[float]]
    map_params: List[float]
    map_log_prob: float
    mean_acceptance: float
    burn_in_fraction: float
    n_samples: int
