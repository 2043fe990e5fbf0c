"""Wave-equation migration and inversion with the double-square-root equation."""

__version__ = "0.1.0"
