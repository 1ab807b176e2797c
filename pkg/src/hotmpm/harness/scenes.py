"""Built-in desk-scale benchmark scenes, as JSON-compatible documents."""

from __future__ import annotations

import copy


def stretched_box(cells: int = 64, youngs: float = 1e5, seed: int = 0) -> dict:
    """Soft box whose F starts as a random diagonal in [0.7, 1.3]; no gravity."""
    return {
        "name": "stretched_box",
        "dim": 2,
        "dx": 1.0 / cells,
        "fps": 24,
        "frames": 1,
        "seed": seed,
        "domain": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
        "gravity": [0.0, 0.0],
        "materials": {"soft": {"density": 1000.0, "youngs": youngs, "poisson": 0.3}},
        "objects": [{"shape": "box", "lo": [0.1, 0.1], "hi": [0.9, 0.9], "material": "soft",
                     "random_diagonal_F": [0.7, 1.3]}],
    }


def stiffness_bar(middle_youngs: float = 1e5, cells: int = 64, omega: float = 2.0) -> dict:
    """Three-segment bar; soft ends (1e5 Pa), swept middle; ends clamped, right end rotating."""
    return {
        "name": "stiffness_bar",
        "dim": 2,
        "dx": 1.0 / cells,
        "fps": 24,
        "frames": 2,
        "domain": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
        "gravity": [0.0, -9.8],
        "materials": {
            "end": {"density": 1000.0, "youngs": 1e5, "poisson": 0.4},
            "middle": {"density": 1000.0, "youngs": middle_youngs, "poisson": 0.4},
        },
        "objects": [
            {"shape": "box", "lo": [0.1, 0.4], "hi": [0.37, 0.6], "material": "end"},
            {"shape": "box", "lo": [0.37, 0.4], "hi": [0.63, 0.6], "material": "middle"},
            {"shape": "box", "lo": [0.63, 0.4], "hi": [0.9, 0.6], "material": "end"},
        ],
        "colliders": [
            {"shape": "half_space", "point": [0.16, 0.5], "normal": [1.0, 0.0]},
            {"shape": "half_space", "point": [0.84, 0.5], "normal": [-1.0, 0.0],
             "motion": {"type": "rotation", "omega": omega, "pivot": [0.87, 0.5]}},
        ],
    }


def twist_bar(cells: int = 32, omega: float = 2.0) -> dict:
    """Two-material bar (5e5 / 5e9 Pa, nu 0.4) with counter-rotating clamped ends."""
    return {
        "name": "twist_bar",
        "dim": 2,
        "dx": 1.0 / cells,
        "fps": 24,
        "frames": 2,
        "domain": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
        "gravity": [0.0, -9.8],
        "materials": {
            "soft": {"density": 2000.0, "youngs": 5e5, "poisson": 0.4},
            "stiff": {"density": 2000.0, "youngs": 5e9, "poisson": 0.4},
        },
        "objects": [
            {"shape": "box", "lo": [0.1, 0.42], "hi": [0.4, 0.58], "material": "soft"},
            {"shape": "box", "lo": [0.4, 0.42], "hi": [0.6, 0.58], "material": "stiff"},
            {"shape": "box", "lo": [0.6, 0.42], "hi": [0.9, 0.58], "material": "soft"},
        ],
        "colliders": [
            {"shape": "half_space", "point": [0.16, 0.5], "normal": [1.0, 0.0],
             "motion": {"type": "rotation", "omega": -omega, "pivot": [0.13, 0.5]}},
            {"shape": "half_space", "point": [0.84, 0.5], "normal": [-1.0, 0.0],
             "motion": {"type": "rotation", "omega": omega, "pivot": [0.87, 0.5]}},
        ],
    }


def soft_blob(cells: int = 32) -> dict:
    """Soft homogeneous disk (5e4 Pa, nu 0.3) dropped on a sticky floor."""
    return {
        "name": "soft_blob",
        "dim": 2,
        "dx": 1.0 / cells,
        "fps": 24,
        "frames": 2,
        "domain": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
        "gravity": [0.0, -9.8],
        "materials": {"soft": {"density": 2000.0, "youngs": 5e4, "poisson": 0.3}},
        "objects": [{"shape": "sphere", "center": [0.5, 0.35], "radius": 0.2, "material": "soft",
                     "velocity": [0.0, -0.5]}],
        "colliders": [{"shape": "half_space", "point": [0.0, 0.12], "normal": [0.0, 1.0]}],
    }


def metal_plasticity(cells: int = 32) -> dict:
    """Von Mises block pressed by a descending sphere onto a sticky floor."""
    return {
        "name": "metal_plasticity",
        "dim": 2,
        "dx": 1.0 / cells,
        "fps": 24,
        "frames": 1,
        "domain": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
        "gravity": [0.0, -9.8],
        "materials": {"metal": {"density": 2700.0, "youngs": 2e5, "poisson": 0.33,
                                "plasticity": {"kind": "von_mises", "yield_stress": 720.0}}},
        "objects": [{"shape": "box", "lo": [0.3, 0.15], "hi": [0.7, 0.35], "material": "metal"}],
        "colliders": [
            {"shape": "half_space", "point": [0.0, 0.2], "normal": [0.0, 1.0]},
            {"shape": "sphere", "center": [0.5, 0.47], "radius": 0.13,
             "motion": {"type": "linear", "velocity": [0.0, -0.5]}},
        ],
    }


def smoke_3d(cells: int = 16) -> dict:
    """Small 3D elastic cube falling onto a sticky floor."""
    return {
        "name": "smoke_3d",
        "dim": 3,
        "dx": 1.0 / cells,
        "fps": 24,
        "frames": 1,
        "domain": {"lo": [0.0, 0.0, 0.0], "hi": [1.0, 1.0, 1.0]},
        "gravity": [0.0, -9.8, 0.0],
        "sampling": {"per_axis": 2, "jitter": 0.5},
        "materials": {"jelly": {"density": 1000.0, "youngs": 1e5, "poisson": 0.3}},
        "objects": [{"shape": "box", "lo": [0.35, 0.2, 0.35], "hi": [0.65, 0.5, 0.65], "material": "jelly"}],
        "colliders": [{"shape": "half_space", "point": [0.0, 0.25, 0.0], "normal": [0.0, 1.0, 0.0]}],
    }


LIBRARY = {
    "stretched_box": stretched_box,
    "stiffness_bar": stiffness_bar,
    "twist_bar": twist_bar,
    "soft_blob": soft_blob,
    "metal_plasticity": metal_plasticity,
    "smoke_3d": smoke_3d,
}


def builtin(name: str, **kw) -> dict:
    try:
        return copy.deepcopy(LIBRARY[name](**kw))
    except KeyError:
        raise KeyError(f"unknown built-in scene {name!r}; available: {', '.join(LIBRARY)}") from None
