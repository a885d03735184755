"""Compiler and micro-engine for the Whamm WebAssembly instrumentation DSL."""

__version__ = "0.1.0"
