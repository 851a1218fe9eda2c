"""bookforge: build verified tool libraries from reference material and
answer questions with them.

The pipeline in one breath: ingest a book (or organize loose snippets into
one), generate candidate tools per section, verify each tool's demo example
in a sandboxed worker, refine failures once with execution feedback, store
survivors in a hierarchical toolbox, then answer benchmark questions by
selecting categories and tools before generating solution code.
"""

from .errors import ForgeError
from .forge import ForgeConfig, ForgeReport, ToolDraft, forge_toolbox
from .ingest import ReferenceBook, SnippetSet, organize_snippets, parse_book
from .llm import LlmClient, LlmRequest, ProviderConfig
from .sandbox import ExecRequest, ExecResponse, SandboxPool
from .selection import SelectionConfig, select_tools, selected_tools
from .solver import SolveConfig, solve
from .store import Tool, Toolbox, load_toolbox, save_toolbox, toolbox_stats
from .templates import TemplateSet
from .verifier import compare_answers, verify_tool

__version__ = "0.1.0"

__all__ = [
    "ForgeError",
    "ForgeConfig",
    "ForgeReport",
    "ToolDraft",
    "forge_toolbox",
    "ReferenceBook",
    "SnippetSet",
    "organize_snippets",
    "parse_book",
    "LlmClient",
    "LlmRequest",
    "ProviderConfig",
    "ExecRequest",
    "ExecResponse",
    "SandboxPool",
    "SelectionConfig",
    "select_tools",
    "selected_tools",
    "SolveConfig",
    "solve",
    "Tool",
    "Toolbox",
    "load_toolbox",
    "save_toolbox",
    "toolbox_stats",
    "TemplateSet",
    "compare_answers",
    "verify_tool",
    "__version__",
]
