"""Named scenario presets reproducing the reference flow configurations.

The zero-corner circle family uses circulations {12, 4*pi, 12.8}; the
critical member is the exact merge value 4*pi ~ 12.566 (display name 12.57).
"""

import numpy as np

FOUR_PI = 4.0 * np.pi


def _circle_scenario(gamma, name):
    return {
        "schema_version": 1,
        "name": name,
        "model": "conformal",
        "body": {"type": "circle", "radius": 1.0},
        "farfield": {"vinf": 1.0, "alpha_deg": 0.0, "circulation": gamma},
        "analyses": ["trace", "figure"],
    }


def _one_corner_scenario(alpha_deg, name):
    return {
        "schema_version": 1,
        "name": name,
        "model": "conformal",
        "body": {"type": "karman_trefftz", "nu": 1.75, "center_mu": (-0.1, 0.0)},
        "farfield": {"vinf": 1.0, "alpha_deg": alpha_deg, "circulation": "kutta"},
        "analyses": ["trace", "figure"],
    }


PRESETS = {
    # two-corner profile at its Kutta circulation (zero, by symmetry)
    "fig4": {
        "schema_version": 1,
        "name": "fig4",
        "model": "conformal",
        "body": {"type": "karman_trefftz", "nu": 1.5, "center_mu": (0.0, 0.0)},
        "farfield": {"vinf": 1.0, "alpha_deg": 0.0, "circulation": "kutta"},
        "analyses": ["trace", "figure"],
    },
    # one-corner profile at three flow angles
    "fig6a": _one_corner_scenario(0.0, "fig6a"),
    "fig6b": _one_corner_scenario(90.0, "fig6b"),
    "fig6c": _one_corner_scenario(135.0, "fig6c"),
    # circle at sub/critical/supercritical circulation
    "fig_zerocorner_12": _circle_scenario(12.0, "fig_zerocorner_12"),
    "fig_zerocorner_12.57": _circle_scenario(FOUR_PI, "fig_zerocorner_12.57"),
    "fig_zerocorner_12.8": _circle_scenario(12.8, "fig_zerocorner_12.8"),
    # incompressible triangle sweep feeding the nonexistence verdict
    "triangle-theorem": {
        "schema_version": 1,
        "name": "triangle-theorem",
        "model": "incompressible",
        "body": {
            "type": "polygon",
            "vertices": [[0.0, 0.5773502692], [-0.5, -0.2886751346],
                         [0.5, -0.2886751346]],
        },
        "farfield": {"vinf": 1.0, "alpha_deg": 0.0, "circulation": 0.0},
        "grid": {"h": 0.015625, "r_far": 10.0, "refine_levels": 6},
        "sweep": {"n_gamma": 41, "span": 25.132741228718345},
        "analyses": ["sweep", "theorem"],
    },
    # compressible circle demonstration
    "circle-m03": {
        "schema_version": 1,
        "name": "circle-m03",
        "model": "compressible",
        "body": {"type": "circle", "radius": 1.0},
        "gas": {"gamma": 1.4, "bernoulli": "normalized"},
        "farfield": {"mach_inf": 0.3, "circulation": 0.0},
        "grid": {"h": 0.03125, "r_far": 10.0},
        "analyses": ["solve", "figure"],
    },
    # four-channel quadrant scenario
    "channel": {
        "schema_version": 1,
        "name": "channel",
        "model": "channel",
        "channel": {"diamond": 1.0, "half_width": 1.0, "shoulder": 2.5,
                    "length": 6.0, "h": 0.015625},
        "analyses": ["solve", "figure"],
    },
}


def get_preset(name):
    if name not in PRESETS:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    import copy

    return copy.deepcopy(PRESETS[name])
