"""
Scenario loader component for the navigation experiments.

This module loads `scenario v1` JSON files, validates their structure and
builds fully resolved Scenario objects. The inverse, scenario_to_dict, is used
for the scenario.lock file written next to batch results.
"""

import json
import os
from dataclasses import asdict, fields
from typing import Any, Dict

from .models import (CostWeights, GoalTolerance, LatticeConfig, Scenario, TrackerConfig,
                     VehicleParams, footprint_from_dict)

SCENARIO_VERSION = 'scenario v1'

_SCALAR_KEYS = {
    'layout', 'corridor_widths', 'corridor_width', 'corridor_length', 'runs',
    'targets_per_run', 'seeds', 'base_seed', 'timeout', 'dt', 'grid_resolution',
}
_SECTION_KEYS = {'tolerances', 'start_jitter', 'vehicle', 'lattice', 'tracker'}
_ALLOWED_KEYS = _SCALAR_KEYS | _SECTION_KEYS | {'version'}


class ScenarioLoaderError(Exception):
    """Custom exception for scenario loading errors."""
    pass


class ScenarioLoader:
    """
    Loads and validates scenario files.

    Unknown keys are rejected at every level so a typo never silently falls
    back to a default.
    """

    def load_scenario(self, scenario_path: str) -> Scenario:
        """
        Load a scenario from a JSON file.

        Args:
            scenario_path: Path to the scenario file

        Returns:
            Validated Scenario

        Raises:
            ScenarioLoaderError: If the file cannot be read, parsed or validated
        """
        if not scenario_path or not isinstance(scenario_path, str):
            raise ScenarioLoaderError("Scenario path must be a non-empty string")
        if not os.path.isfile(scenario_path):
            raise ScenarioLoaderError(f"Scenario file not found: {scenario_path}")

        try:
            with open(scenario_path, 'r', encoding='utf-8') as file:
                data = json.load(file)
        except json.JSONDecodeError as e:
            raise ScenarioLoaderError(f"Invalid JSON in scenario file: {e}")
        except IOError as e:
            raise ScenarioLoaderError(f"Error reading scenario file: {e}")

        return self.scenario_from_dict(data)

    def scenario_from_dict(self, data: Dict[str, Any]) -> Scenario:
        """
        Build a Scenario from its dictionary form.

        Raises:
            ScenarioLoaderError: On unknown keys or invalid values
        """
        self.validate_scenario_structure(data)
        kwargs: Dict[str, Any] = {k: v for k, v in data.items()
                                  if k in _SCALAR_KEYS and k != 'corridor_width'}
        if 'corridor_width' in data:
            kwargs['corridor_widths'] = [data['corridor_width']]

        try:
            if 'tolerances' in data:
                kwargs['tolerances'] = GoalTolerance(**data['tolerances'])
            if 'start_jitter' in data:
                kwargs['start_jitter'] = GoalTolerance(**data['start_jitter'])
            vehicle = self._vehicle_from_dict(data.get('vehicle', {}))
            kwargs['vehicle'] = vehicle
            if 'lattice' in data:
                kwargs['lattice'] = self._lattice_from_dict(data['lattice'], vehicle)
            if 'tracker' in data:
                tracker = dict(data['tracker'])
                if 'goal_tol' in tracker:
                    tracker['goal_tol'] = GoalTolerance(**tracker['goal_tol'])
                kwargs['tracker'] = TrackerConfig(**tracker)
            return Scenario(**kwargs)
        except (TypeError, ValueError, KeyError) as e:
            raise ScenarioLoaderError(f"Invalid scenario: {e}") from e

    def validate_scenario_structure(self, data: Dict[str, Any]) -> bool:
        """
        Check the key structure of a scenario dictionary.

        Returns:
            True if the structure is valid

        Raises:
            ScenarioLoaderError: If the structure is invalid
        """
        if not isinstance(data, dict):
            raise ScenarioLoaderError("Scenario must be a JSON object")
        unknown = sorted(set(data) - _ALLOWED_KEYS)
        if unknown:
            raise ScenarioLoaderError(f"Unknown scenario keys: {', '.join(unknown)}")
        if 'version' in data and data['version'] != SCENARIO_VERSION:
            raise ScenarioLoaderError(f"Unsupported scenario version: {data['version']!r}")
        if 'corridor_width' in data and 'corridor_widths' in data:
            raise ScenarioLoaderError("Give either corridor_width or corridor_widths, not both")

        section_types = {
            'tolerances': GoalTolerance, 'start_jitter': GoalTolerance,
            'vehicle': VehicleParams, 'lattice': LatticeConfig, 'tracker': TrackerConfig,
        }
        for key, cls in section_types.items():
            if key not in data:
                continue
            section = data[key]
            if not isinstance(section, dict):
                raise ScenarioLoaderError(f"'{key}' must be an object")
            allowed = {f.name for f in fields(cls)}
            bad = sorted(set(section) - allowed)
            if bad:
                raise ScenarioLoaderError(f"Unknown keys in '{key}': {', '.join(bad)}")
        lattice = data.get('lattice', {})
        if 'cost_weights' in lattice:
            allowed = {f.name for f in fields(CostWeights)}
            bad = sorted(set(lattice['cost_weights']) - allowed)
            if bad:
                raise ScenarioLoaderError(f"Unknown keys in 'lattice.cost_weights': {', '.join(bad)}")
        return True

    def _vehicle_from_dict(self, data: Dict[str, Any]) -> VehicleParams:
        values = dict(data)
        for key in ('tractor_footprint', 'trailer_footprint'):
            if key in values:
                values[key] = footprint_from_dict(values[key])
        if 'two_circles' in values and values['two_circles'] is not None:
            values['two_circles'] = footprint_from_dict(values['two_circles'])
        return VehicleParams(**values)

    def _lattice_from_dict(self, data: Dict[str, Any], vehicle: VehicleParams) -> LatticeConfig:
        values = dict(data)
        if 'cost_weights' in values:
            values['cost_weights'] = CostWeights(**values['cost_weights'])
        if 'primitive_lengths' in values:
            values['primitive_lengths'] = tuple(values['primitive_lengths'])
        return LatticeConfig.for_vehicle(vehicle, **values)


def scenario_to_dict(sc: Scenario) -> Dict[str, Any]:
    """Fully resolved dictionary form of a scenario (every field explicit)."""
    vehicle = asdict(sc.vehicle)
    vehicle['tractor_footprint'] = sc.vehicle.tractor_footprint.to_dict()
    vehicle['trailer_footprint'] = sc.vehicle.trailer_footprint.to_dict()
    vehicle['two_circles'] = sc.vehicle.two_circles.to_dict()
    lattice = asdict(sc.lattice)
    lattice['primitive_lengths'] = list(sc.lattice.primitive_lengths)
    return {
        'version': SCENARIO_VERSION,
        'layout': sc.layout,
        'corridor_widths': list(sc.corridor_widths),
        'corridor_length': sc.corridor_length,
        'runs': sc.runs,
        'targets_per_run': sc.targets_per_run,
        'seeds': list(sc.seeds),
        'base_seed': sc.base_seed,
        'tolerances': asdict(sc.tolerances),
        'timeout': sc.timeout,
        'dt': sc.dt,
        'grid_resolution': sc.grid_resolution,
        'start_jitter': asdict(sc.start_jitter),
        'vehicle': vehicle,
        'lattice': lattice,
        'tracker': asdict(sc.tracker),
    }
