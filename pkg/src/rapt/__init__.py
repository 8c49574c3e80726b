"""rapt: a workbench for reversible truly concurrent process terms."""

__version__ = "0.1.0"
