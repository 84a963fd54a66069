"""Python access to the minidroid agent core."""

import json

from ._core import Error, ParseError, canonical, default_templates, parse, query, violations
from ._core import Agent as _Agent
from ._core import roundtrip_message

__all__ = [
    "Agent",
    "Error",
    "ParseError",
    "canonical",
    "default_templates",
    "parse",
    "parse_dict",
    "query",
    "roundtrip_message",
    "violations",
]


def parse_dict(text, templates=None):
    """Logical form for `text` as a dict."""
    return json.loads(parse(text, templates))


class Agent(_Agent):
    """Agent over a scenario given as text (see docs/scenario-format.md)."""

    @classmethod
    def from_files(cls, scenario_path, config_path=None):
        with open(scenario_path) as f:
            scenario = f.read()
        config = ""
        if config_path:
            with open(config_path) as f:
                config = f.read()
        return cls(scenario, config)

    def state(self, include_memory=False):
        return json.loads(self.snapshot(include_memory))
