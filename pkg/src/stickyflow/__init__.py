"""Sticky Brownian motion: simulation, transition semigroup, the Wiener flow of
kernels and its chaos expansion, with Monte Carlo verification tools."""

from .paths import BrownianPath, ReflectedPath, TimeGrid, reflect, refine, sample_brownian
from .semigroup import SemigroupParams, TransitionKernel, atom_mass, g_fn
from .sticky_sim import StickyParams, StickyPath, simulate_sticky, simulate_time_change
from .kernel_flow import GTransform, TestFunction, da_function, g_transform, make_da_function

__version__ = "0.1.0"

__all__ = [
    "BrownianPath", "ReflectedPath", "TimeGrid", "reflect", "refine", "sample_brownian",
    "SemigroupParams", "TransitionKernel", "atom_mass", "g_fn",
    "StickyParams", "StickyPath", "simulate_sticky", "simulate_time_change",
    "GTransform", "TestFunction", "da_function", "g_transform", "make_da_function",
]
