"""One-stop estimator running segment -> perturb -> surrogate for one image."""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .dataset import ClassLabel
from .errors import ContractError
from .image import RasterImage
from .perturb import FusionPolicy, build_batch
from .segmentation import segment_grid, segment_slic, SegmentationParams, SegmentMap
from .surrogate import Explanation, RidgeConfig, explain


class LocalSurrogateExplainer(BaseEstimator):
    """Explain single predictions of any adapter via a local weighted surrogate.

    fit(image, model) runs the whole pipeline and exposes segments_, batch_
    and explanation_; hyperparameters follow the sklearn convention so
    get_params/set_params/clone compose with the wider ecosystem.
    """

    def __init__(
        self,
        n_samples: int = 1000,
        kernel_width: float = 0.25,
        ridge_lambda: float = 1.0,
        top_k: int = 5,
        segmenter: str = "slic",
        n_segments: int = 50,
        compactness: float = 10.0,
        max_iterations: int = 10,
        grid_rows: int = 2,
        grid_cols: int = 4,
        fusion_mode: str = "segment-mean",
        fixed_color: tuple[float, float, float] = (0.5, 0.5, 0.5),
        seed: int = 7,
        workers: int = 1,
        chunk_size: int = 64,
    ):
        self.n_samples = n_samples
        self.kernel_width = kernel_width
        self.ridge_lambda = ridge_lambda
        self.top_k = top_k
        self.segmenter = segmenter
        self.n_segments = n_segments
        self.compactness = compactness
        self.max_iterations = max_iterations
        self.grid_rows = grid_rows
        self.grid_cols = grid_cols
        self.fusion_mode = fusion_mode
        self.fixed_color = fixed_color
        self.seed = seed
        self.workers = workers
        self.chunk_size = chunk_size

    def _segment(self, image: RasterImage) -> SegmentMap:
        if self.segmenter == "slic":
            params = SegmentationParams(
                target_segments=self.n_segments,
                compactness=self.compactness,
                max_iterations=self.max_iterations,
                seed=self.seed,
            )
            return segment_slic(image, params)
        if self.segmenter == "grid":
            return segment_grid(image, self.grid_rows, self.grid_cols)
        raise ContractError(f"segmenter must be 'slic' or 'grid', got {self.segmenter!r}")

    def fit(self, image: RasterImage, model, target_class: ClassLabel | None = None, segments: SegmentMap | None = None):
        self.segments_ = segments if segments is not None else self._segment(image)
        policy = FusionPolicy(mode=self.fusion_mode, fixed_color=tuple(self.fixed_color))
        self.batch_ = build_batch(
            image,
            self.segments_,
            n_samples=self.n_samples,
            seed=self.seed,
            sigma=self.kernel_width,
            policy=policy,
            model=model,
            workers=self.workers,
            chunk_size=self.chunk_size,
        )
        config = RidgeConfig(ridge_lambda=self.ridge_lambda, top_k=self.top_k)
        self.explanation_ = explain(self.batch_, target_class=target_class, config=config)
        return self

    def explain_image(
        self,
        image: RasterImage,
        model,
        target_class: ClassLabel | None = None,
        segments: SegmentMap | None = None,
    ) -> Explanation:
        return self.fit(image, model, target_class=target_class, segments=segments).explanation_
