"""Hot grid kernels, provided by the backend chosen in tis.backend."""

from ..backend import get_kernels

_impl = get_kernels()

im2col3 = _impl.im2col3
col2im3 = _impl.col2im3
label_components = _impl.label_components

__all__ = ["im2col3", "col2im3", "label_components"]
