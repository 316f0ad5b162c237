"""Model spec strings: one flag value selects any adapter kind.

    oracle:<map-file>:<segment-id>   planted oracle keyed to the image under
                                     explanation (needs a reference image)
    tinycnn:<spec-file>              fixed-weight CNN from a manifest
    proc:<command line>              child process speaking the protocol
    http:<url>                       HTTP endpoint speaking the protocol
"""

from __future__ import annotations

from ..errors import ContractError, ModelSpecError
from ..image import RasterImage
from ..segmentation import SegmentMap
from .base import ModelAdapter
from .external import HttpAdapter, ProcessAdapter, url_from_endpoint
from .oracle import PlantedOracle
from .tinycnn import TinyCnn


def model_from_spec(spec: str, reference: RasterImage | None = None) -> ModelAdapter:
    """Build the adapter a spec string names.

    `reference` is the image being explained; the oracle kind requires it.
    """
    if spec.startswith("oracle:"):
        rest = spec[len("oracle:") :]
        map_file, sep, segment = rest.rpartition(":")
        if not sep or not map_file:
            raise ModelSpecError(f"oracle spec must be oracle:<map-file>:<segment-id>, got {spec!r}")
        try:
            key_segment = int(segment)
        except ValueError as exc:
            raise ModelSpecError(f"oracle segment id must be an integer, got {segment!r}") from exc
        if reference is None:
            raise ContractError("the oracle model needs the image under explanation as its reference")
        segment_map = SegmentMap.load(map_file)
        return PlantedOracle(segment_map, key_segment, reference, model_id=spec)
    if spec.startswith("tinycnn:"):
        return TinyCnn.load(spec[len("tinycnn:") :])
    if spec.startswith("proc:"):
        return ProcessAdapter(spec[len("proc:") :], model_id=spec)
    if spec.startswith(("http:", "https:")):
        return HttpAdapter(url_from_endpoint(spec), model_id=spec)
    raise ModelSpecError(
        f"unknown model spec {spec!r}; expected oracle:, tinycnn:, proc: or http:"
    )
