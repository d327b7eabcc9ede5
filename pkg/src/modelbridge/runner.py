"""Runner protocol: one query/response channel to a model.

A runner pairs a transport with a serialization format.  The caller either
stages features one by one with put() or hands a complete bundle to
evaluate().  evaluate() always validates the reply against the caller's
declared output specs, so transport and format stay invisible to calling
code.  Runners are single-threaded; concurrent evaluate() calls on one
runner are a caller error.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Callable, Sequence

from .errors import Malformed, ModelError
from .serdes import ERROR_KEY, SerDesKind, validate_expected
from .tensors import DType, FeatureBundle, TensorSpec, TensorValue

__all__ = ["ModelRunner", "Handler"]

Handler = Callable[[FeatureBundle], FeatureBundle]


class ModelRunner(ABC):
    """Base for all runners; subclasses implement _evaluate_raw()."""

    def __init__(self, serdes_kind: SerDesKind):
        self.serdes_kind = serdes_kind
        self._staged = FeatureBundle()

    def put(self, key: str, value: TensorValue) -> None:
        """Stage one feature for the next evaluate(None, ...) call."""
        self._staged.put(key, value)

    @property
    def staged(self) -> FeatureBundle:
        return self._staged

    def evaluate(
        self,
        bundle: FeatureBundle | None,
        output_specs: Sequence[TensorSpec],
    ) -> FeatureBundle:
        """Send one input bundle and return the validated reply.

        bundle=None sends the staged features and clears them on success;
        an explicit bundle is left untouched so it can be resent.  The
        reply must match output_specs key-for-key (Malformed otherwise)
        and dtype-for-dtype (TypeMismatch otherwise); it is returned in
        output_specs order.  A reply consisting of the reserved "__error"
        str feature raises ModelError with the peer's message.
        """
        specs = tuple(output_specs)
        if not specs:
            raise Malformed("output_specs must be non-empty")
        src = self._staged if bundle is None else bundle
        raw = self._evaluate_raw(src, specs)
        if (
            len(raw) == 1
            and ERROR_KEY in raw
            and raw.get(ERROR_KEY).spec.dtype is DType.STR
        ):
            raise ModelError(raw.get(ERROR_KEY).data[0])
        out = validate_expected(raw, specs)
        if bundle is None:
            self._staged.clear()
        return out

    @abstractmethod
    def _evaluate_raw(
        self, src: FeatureBundle, output_specs: tuple[TensorSpec, ...]
    ) -> FeatureBundle:
        """Transport-specific exchange; returns the peer's raw reply."""

    def close(self) -> None:
        """Release transport resources; safe to call more than once."""

    def __enter__(self) -> "ModelRunner":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
