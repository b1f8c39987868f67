"""Multi-party execution: message formats, transports, party programs, runner.

Submodules are imported explicitly (``cipherloop.engine.runner`` etc.) so the
protocol modules can depend on :mod:`cipherloop.engine.messages` without
import cycles.
"""
