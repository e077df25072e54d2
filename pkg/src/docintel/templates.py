"""Default prompt templates, shipped as versioned constants.

These are part of the engine's observable behavior (the exact prompt is
returned alongside answers), so edits require a version bump, not an
in-place change. `docintel config print-templates` dumps them for audit.
"""

from __future__ import annotations

from .llm import PromptTemplate

TEMPLATE_VERSION = 1

ASK_V1 = PromptTemplate.from_text(
    "You are answering a question using only the numbered context passages "
    "below.\n"
    "\n"
    "Context:\n"
    "{context}\n"
    "\n"
    "Question: {question}\n"
    "\n"
    "Answer using only the context above. Cite the source numbers you used "
    "in square brackets, e.g. [1]."
)

MAP_V1 = PromptTemplate.from_text(
    "Summarize the following passage in a few sentences, keeping concrete "
    "facts and names.\n"
    "\n"
    "Passage:\n"
    "{unit}"
)

REDUCE_V1 = PromptTemplate.from_text(
    "Combine the following partial summaries into one coherent summary. "
    "Do not introduce information that is not present.\n"
    "\n"
    "Partial summaries:\n"
    "{summaries}"
)

CONCEPT_MAP_V1 = PromptTemplate.from_text(
    "Summarize what the following passage says about \"{concept}\", in a "
    "few sentences. Ignore unrelated content.\n"
    "\n"
    "Passage:\n"
    "{unit}"
)

CONCEPT_REDUCE_V1 = PromptTemplate.from_text(
    "Combine the following partial summaries about \"{concept}\" into one "
    "coherent summary focused on that topic.\n"
    "\n"
    "Partial summaries:\n"
    "{summaries}"
)

EXTRACT_UNIT_V1 = PromptTemplate.from_text(
    "Extract the requested fields from the following text.\n"
    "\n"
    "Text:\n"
    "{unit}"
)

# Fixed sentinel answers; returned verbatim, never sent to a backend.
NO_CONTEXT_ANSWER = "No relevant context was found in the store for this question."
CONCEPT_NOT_FOUND = "No passages in the document matched the requested concept."


def all_templates() -> dict[str, PromptTemplate]:
    return {
        "ask": ASK_V1,
        "map": MAP_V1,
        "reduce": REDUCE_V1,
        "concept_map": CONCEPT_MAP_V1,
        "concept_reduce": CONCEPT_REDUCE_V1,
        "extract_unit": EXTRACT_UNIT_V1,
    }
