"""procforge: BPMN 2.0 process models with blockchain asset registries.

Parses extended BPMN and registry specs, compiles the process into a
single-word marking automaton, emits Solidity contracts realizing it, and
replays execution traces against an embedded interpreter with simulated
token ledgers and record registries.
"""

__version__ = "0.1.0"
