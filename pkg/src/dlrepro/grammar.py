"""Grammar handles behind which source parsing sits.

Only Python is registered here; the chunker and structural check go through
this indirection so an unsupported language fails loudly instead of silently
falling back to line windows.
"""

from __future__ import annotations

import ast

from .errors import GrammarUnavailableError


class PythonGrammar:
    name = "python"

    def parse(self, source: str) -> ast.Module:
        """Parse source text; raises SyntaxError on malformed input."""
        return ast.parse(source)


_REGISTRY = {"python": PythonGrammar()}


def get_grammar(name: str) -> PythonGrammar:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise GrammarUnavailableError(name) from None
