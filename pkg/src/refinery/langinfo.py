"""Language registry and per-language syntax tables.

One place for everything the pipeline knows about a language: file
extensions, shebang interpreters, comment delimiters, control-flow decision
tokens, and import statement patterns. Modules consume these tables instead
of hardcoding per-language logic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

OTHER = "other"

# Extension (lowercase, with dot) -> canonical language tag.
EXTENSION_MAP: dict[str, str] = {
    ".java": "java",
    ".py": "python", ".pyw": "python", ".pyi": "python",
    ".cpp": "cpp", ".cc": "cpp", ".cxx": "cpp", ".hpp": "cpp", ".hh": "cpp",
    ".hxx": "cpp", ".ino": "cpp",
    ".c": "c", ".h": "c",
    ".js": "javascript", ".jsx": "javascript", ".mjs": "javascript", ".cjs": "javascript",
    ".ts": "typescript", ".tsx": "typescript", ".mts": "typescript", ".cts": "typescript",
    ".cs": "csharp",
    ".go": "go",
    ".php": "php", ".php5": "php", ".phtml": "php",
    ".rb": "ruby", ".rake": "ruby", ".gemspec": "ruby",
    ".rs": "rust",
    ".kt": "kotlin", ".kts": "kotlin",
    ".swift": "swift",
    ".scala": "scala", ".sc": "scala",
    ".m": "objective-c", ".mm": "objective-c",
    ".md": "markdown", ".markdown": "markdown", ".mdown": "markdown",
    ".html": "html", ".htm": "html", ".xhtml": "html",
    ".css": "css", ".scss": "css", ".less": "css",
    ".json": "json", ".jsonl": "json", ".geojson": "json",
    ".yml": "yaml", ".yaml": "yaml",
    ".xml": "xml", ".xsd": "xml", ".xsl": "xml",
    ".sql": "sql",
    ".sh": "shell", ".bash": "shell", ".zsh": "shell", ".ksh": "shell",
    ".ps1": "powershell", ".psm1": "powershell",
    ".bat": "batch", ".cmd": "batch",
    ".pl": "perl", ".pm": "perl",
    ".lua": "lua",
    ".r": "r",
    ".hs": "haskell", ".lhs": "haskell",
    ".dart": "dart",
    ".jl": "julia",
    ".groovy": "groovy", ".gradle": "groovy",
    ".ex": "elixir", ".exs": "elixir",
    ".erl": "erlang", ".hrl": "erlang",
    ".clj": "clojure", ".cljs": "clojure", ".cljc": "clojure",
    ".ml": "ocaml", ".mli": "ocaml",
    ".fs": "fsharp", ".fsi": "fsharp", ".fsx": "fsharp",
    ".f": "fortran", ".f77": "fortran", ".f90": "fortran", ".f95": "fortran",
    ".pas": "pascal", ".pp": "pascal",
    ".vim": "vim",
    ".tex": "tex", ".sty": "tex",
    ".toml": "toml",
    ".ini": "ini", ".cfg": "ini", ".conf": "ini",
    ".proto": "protobuf",
    ".graphql": "graphql", ".gql": "graphql",
    ".rst": "restructuredtext",
    ".txt": "text",
    ".s": "assembly", ".asm": "assembly",
    ".zig": "zig",
    ".cmake": "cmake",
    ".vb": "visual-basic",
    ".nim": "nim",
    ".sol": "solidity",
    ".v": "verilog", ".sv": "verilog",
    ".vhd": "vhdl", ".vhdl": "vhdl",
    ".coffee": "coffeescript",
    ".svelte": "svelte",
    ".vue": "vue",
}

# Extensionless well-known filenames.
BASENAME_MAP: dict[str, str] = {
    "makefile": "makefile",
    "gnumakefile": "makefile",
    "dockerfile": "dockerfile",
}

# Shebang interpreter name -> language tag.
SHEBANG_MAP: dict[str, str] = {
    "python": "python", "python2": "python", "python3": "python",
    "sh": "shell", "bash": "shell", "zsh": "shell", "dash": "shell", "ksh": "shell",
    "node": "javascript", "nodejs": "javascript",
    "perl": "perl",
    "ruby": "ruby",
    "php": "php",
    "lua": "lua",
}

REGISTRY: frozenset[str] = frozenset(EXTENSION_MAP.values()) | frozenset(
    BASENAME_MAP.values()
) | frozenset({OTHER})

def _shebang_interpreter(first_line: str) -> str | None:
    parts = first_line[2:].strip().split()
    if not parts:
        return None
    exe = parts[0].rsplit("/", 1)[-1]
    if exe == "env":
        exe = next((a.rsplit("/", 1)[-1] for a in parts[1:] if not a.startswith("-")), "")
    if not exe:
        return None
    return re.sub(r"[\d.]+$", "", exe.lower()) or exe.lower()


@dataclass(frozen=True)
class CommentSyntax:
    """Line-comment prefixes and block-comment delimiter pairs."""

    line_prefixes: tuple[str, ...] = ()
    block_pairs: tuple[tuple[str, str], ...] = ()


_C_LIKE = CommentSyntax(line_prefixes=("//",), block_pairs=(("/*", "*/"),))
_HASH = CommentSyntax(line_prefixes=("#",))
_XMLISH = CommentSyntax(block_pairs=(("<!--", "-->"),))

COMMENT_SYNTAX: dict[str, CommentSyntax] = {
    "c": _C_LIKE, "cpp": _C_LIKE, "java": _C_LIKE, "javascript": _C_LIKE,
    "typescript": _C_LIKE, "csharp": _C_LIKE, "go": _C_LIKE, "rust": _C_LIKE,
    "kotlin": _C_LIKE, "swift": _C_LIKE, "scala": _C_LIKE, "dart": _C_LIKE,
    "groovy": _C_LIKE, "objective-c": _C_LIKE, "zig": _C_LIKE,
    "protobuf": _C_LIKE, "solidity": _C_LIKE, "verilog": _C_LIKE,
    "php": CommentSyntax(line_prefixes=("//", "#"), block_pairs=(("/*", "*/"),)),
    "python": CommentSyntax(line_prefixes=("#",),
                            block_pairs=(('"""', '"""'), ("'''", "'''"))),
    "shell": _HASH, "yaml": _HASH, "toml": _HASH, "ini": _HASH,
    "dockerfile": _HASH, "makefile": _HASH, "cmake": _HASH, "nim": _HASH,
    "elixir": _HASH, "r": _HASH, "perl": _HASH,
    "ruby": CommentSyntax(line_prefixes=("#",), block_pairs=(("=begin", "=end"),)),
    "julia": CommentSyntax(line_prefixes=("#",), block_pairs=(("#=", "=#"),)),
    "powershell": CommentSyntax(line_prefixes=("#",), block_pairs=(("<#", "#>"),)),
    "coffeescript": CommentSyntax(line_prefixes=("#",), block_pairs=(("###", "###"),)),
    "html": _XMLISH, "xml": _XMLISH, "markdown": _XMLISH, "vue": _XMLISH,
    "svelte": _XMLISH,
    "css": CommentSyntax(block_pairs=(("/*", "*/"),)),
    "sql": CommentSyntax(line_prefixes=("--",), block_pairs=(("/*", "*/"),)),
    "lua": CommentSyntax(line_prefixes=("--",), block_pairs=(("--[[", "]]"),)),
    "haskell": CommentSyntax(line_prefixes=("--",), block_pairs=(("{-", "-}"),)),
    "tex": CommentSyntax(line_prefixes=("%",)),
    "erlang": CommentSyntax(line_prefixes=("%",)),
    "clojure": CommentSyntax(line_prefixes=(";",)),
    "assembly": CommentSyntax(line_prefixes=(";", "#")),
    "fortran": CommentSyntax(line_prefixes=("!",)),
    "pascal": CommentSyntax(line_prefixes=("//",), block_pairs=(("(*", "*)"), ("{", "}"))),
    "ocaml": CommentSyntax(block_pairs=(("(*", "*)"),)),
    "fsharp": CommentSyntax(line_prefixes=("//",), block_pairs=(("(*", "*)"),)),
    "vim": CommentSyntax(line_prefixes=('"',)),
    "visual-basic": CommentSyntax(line_prefixes=("'",)),
    "batch": CommentSyntax(line_prefixes=("REM ", "::")),
}


@dataclass(frozen=True)
class DecisionTokens:
    """Control-flow tokens that add one to cyclomatic complexity each."""

    keywords: frozenset[str]
    operators: tuple[str, ...] = ()


_C_DECISIONS = DecisionTokens(
    keywords=frozenset({"if", "for", "while", "case", "catch"}),
    operators=("&&", "||", "?"),
)

DECISION_TOKENS: dict[str, DecisionTokens] = {
    "c": _C_DECISIONS, "cpp": _C_DECISIONS, "java": _C_DECISIONS,
    "javascript": _C_DECISIONS, "typescript": _C_DECISIONS,
    "csharp": _C_DECISIONS, "kotlin": _C_DECISIONS, "swift": _C_DECISIONS,
    "scala": _C_DECISIONS, "dart": _C_DECISIONS, "groovy": _C_DECISIONS,
    "objective-c": _C_DECISIONS, "php": _C_DECISIONS, "solidity": _C_DECISIONS,
    "python": DecisionTokens(
        keywords=frozenset({"if", "elif", "for", "while", "except", "case", "and", "or"})
    ),
    "go": DecisionTokens(keywords=frozenset({"if", "for", "case", "select"}),
                         operators=("&&", "||")),
    "rust": DecisionTokens(keywords=frozenset({"if", "for", "while", "loop"}),
                           operators=("&&", "||")),
    "ruby": DecisionTokens(
        keywords=frozenset({"if", "elsif", "unless", "while", "until", "for",
                            "when", "rescue", "and", "or"}),
        operators=("&&", "||"),
    ),
    "shell": DecisionTokens(keywords=frozenset({"if", "elif", "for", "while", "until",
                                                "case"}),
                            operators=("&&", "||")),
}

# import/include/require extraction: language -> list of regexes whose first
# group captures the imported target.
IMPORT_PATTERNS: dict[str, tuple[re.Pattern[str], ...]] = {
    "python": (
        re.compile(r"^\s*import\s+([\w. ,]+)", re.MULTILINE),
        re.compile(r"^\s*from\s+([\w.]+)\s+import\b", re.MULTILINE),
    ),
    "java": (re.compile(r"^\s*import\s+(?:static\s+)?([\w.*]+)\s*;", re.MULTILINE),),
    "kotlin": (re.compile(r"^\s*import\s+([\w.*]+)", re.MULTILINE),),
    "scala": (re.compile(r"^\s*import\s+([\w.{}, ]+)", re.MULTILINE),),
    "javascript": (
        re.compile(r"""import\s+(?:[\w{}*,\s]+\s+from\s+)?['"]([^'"]+)['"]"""),
        re.compile(r"""require\s*\(\s*['"]([^'"]+)['"]\s*\)"""),
    ),
    "go": (re.compile(r"""^\s*(?:import\s+)?(?:\w+\s+)?"([^"]+)"\s*$""", re.MULTILINE),),
    "c": (re.compile(r"""^\s*#\s*(?:include|import)\s*[<"]([^>"]+)[>"]""", re.MULTILINE),),
    "csharp": (re.compile(r"^\s*using\s+(?:static\s+)?([\w.]+)\s*;", re.MULTILINE),),
    "ruby": (re.compile(r"""^\s*require(?:_relative)?\s+['"]([^'"]+)['"]""", re.MULTILINE),),
    "rust": (re.compile(r"^\s*use\s+([\w:]+)", re.MULTILINE),),
    "php": (
        re.compile(r"^\s*use\s+([\w\\]+)", re.MULTILINE),
        re.compile(r"""(?:require|include)(?:_once)?\s*\(?\s*['"]([^'"]+)['"]"""),
    ),
    "swift": (re.compile(r"^\s*import\s+([\w.]+)", re.MULTILINE),),
}
IMPORT_PATTERNS["typescript"] = IMPORT_PATTERNS["javascript"]
IMPORT_PATTERNS["cpp"] = IMPORT_PATTERNS["c"]
IMPORT_PATTERNS["objective-c"] = IMPORT_PATTERNS["c"]

# Languages the function extractor understands.
PYTHON_LIKE_FUNCTIONS = frozenset({"python"})
BRACE_FUNCTION_LANGS = frozenset({
    "java", "javascript", "typescript", "c", "cpp", "csharp", "go", "rust",
    "kotlin", "swift", "scala", "dart", "groovy", "objective-c", "php",
})
FUNCTION_LANGS = PYTHON_LIKE_FUNCTIONS | BRACE_FUNCTION_LANGS


def detect_language(path: str, content: str = "") -> str:
    """Classify a file by path, falling back to shebang sniffing, then "other".

    Extension lookup is case-insensitive and wins when the file has an
    extension; extensionless files try well-known basenames and then the
    first-line shebang. Total function: never raises, never returns "".
    """
    name = path.rsplit("/", 1)[-1]
    dot = name.rfind(".")
    if dot > 0:
        return EXTENSION_MAP.get(name[dot:].lower(), OTHER)
    known = BASENAME_MAP.get(name.lower())
    if known:
        return known
    if content.startswith("#!"):
        interpreter = _shebang_interpreter(content.split("\n", 1)[0])
        if interpreter:
            return SHEBANG_MAP.get(interpreter, OTHER)
    return OTHER
