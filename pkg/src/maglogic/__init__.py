"""maglogic: physics and design tools for field-addressable magnetic logic.

The package simulates assemblies of permanent magnets in which spatially
uniform field broadcasts ("keys") selectively reshape the one-dimensional
potential landscapes of track-guided movers, enabling one-hot addressing,
mechanical state machines and wireless command buses built from the same
dipole physics.
"""

from .magnetics import (
    MU0,
    FieldKey,
    MagnetSource,
    MagnetSpec,
    assembly_energy,
    dipole_field_at,
    key_energy,
    key_torque,
    moment_from_spec,
    pair_energy,
    pair_force,
    source_from_spec,
)

__version__ = "0.1.0"

__all__ = [
    "MU0",
    "FieldKey",
    "MagnetSource",
    "MagnetSpec",
    "assembly_energy",
    "dipole_field_at",
    "key_energy",
    "key_torque",
    "moment_from_spec",
    "pair_energy",
    "pair_force",
    "source_from_spec",
    "__version__",
]
