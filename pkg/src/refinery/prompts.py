"""Agent prompt templates.

Each role template has four sections. The first two (background and system
instruction) become the system message; the last two (required information and
output format) become the user message.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .aspects import PLACEHOLDER, TemplateError, fill_placeholders

ROLES = ("planner", "refiner", "strategic_reflector", "content_reflector", "summarizer")

USER_SECTION = "# Required Information"

BACKGROUND = """\
This framework refines recommendation explanations to better meet users' goals, such as Factuality, Personalization, and Sentiment coherence.
It includes the following agents:
- Planner: Identifies which aspect of the explanation to refine next or decides whether to terminate the process.
- Refiner: Modifies the explanation on the selected aspect following the instructions.
- Reflector: Evaluates the Planner's and Refiner's actions to provide feedback for improvements.
Together, these agents enhance the recommendation explanation to align with user's goal."""

PLANNER = """\
# Background Clarification
{Background_Clarification}

# System Instruction
You are the Planner. Your role is to identify which aspect of the current explanation requires refinement in the next step, guided by the user's overall goals, refinement trajectory, and the Reflector's feedback.
The framework permits up to {Max_Count} modifications per explanation and will terminate when this limit is reached, necessitating careful planning of the refinement process.

# Required Information
The current explanation is: {Current_Explanation}
The user's overall goal for explanation is: {User_Goal}
The refinement trajectory is: {Refinement_Trajectory}
Reflector's feedback on the Planner's strategies: {Strategic_Reflection}
Reflector's feedback on the content of explanation: {Content_Reflection}

# Output Format
{
"aspect": <int>  // Choose one: 0 (Finish), 1 (Factuality), 2 (Personalization), 3 (Sentiment Coherence)
}"""

REFINER = """\
# Background Clarification
{Background_Clarification}

# System Instruction
You are the Refiner. Your role is to improve the current explanation on a specific aspect, based on the provided refinement instructions and the summarized reflections from the Reflector.
Please ensure the explanation is no longer than {Max_Length} words!

# Required Information
The current explanation is: {Current_Explanation}
The aspect to be refined is: {Refined_Aspect}
Refinement instructions and information for the refined aspect: {Refinement_Instruction}
Summarized Content Reflections on the refined aspect: {Summarize_Reflection}

# Output Format
{
    "explanation": <string>  // The refined explanation.
}"""

STRATEGIC_REFLECTOR = """\
# Background Clarification
{Background_Clarification}

# System Instruction
You are the Strategic Reflector. Your role is to evaluate the Planner's aspect-selection decisions at each round of the refinement based on the user's overall goal, refinement history and evaluation criteria. Assess whether these decisions align with the user's overall goal and provide constructive feedback to help the Planner improve.

# Required Information
The user's overall goal for explanation is: {User_Goal}
The refinement history is: {Refinement_Memory}
At the round {Time_Step}, the aspect being refined is {Refined_Aspect}
Evaluate the Planner's selection, focusing on the following criteria: {Strategy_Criteria}

# Output Format
{
    "strategic reflection": <string>  // The generated strategic reflection.
}"""

CONTENT_REFLECTOR = """\
# Background Clarification
{Background_Clarification}

# System Instruction
You are the Content Reflector. Your role is to evaluate the Refiner's modifications to the content of the explanation based on the current explanation, refined aspect name, aspect instruction, quality signal and evaluation criteria. Assess whether these refinements meet the aspect standard and provide constructive suggestions for improvement.

# Required Information
The current explanation is: {Current_Explanation}
The aspect to be refined is: {Refined_Aspect}
Refinement instructions and information for the refined aspect: {Refinement_Instruction}
The external reference signal for the quality on the refined aspect is: {Quality_Signal}
Evaluate the Refiner's modifications to the content of explanation, focusing on the following criteria: {Content_Criteria}

# Output Format
{
    "content reflection": <string>  // The generated content reflection.
}"""

SUMMARIZER = """\
# Background Clarification
{Background_Clarification}

# System Instruction
You condense the Reflector's past feedback so the Refiner can act on it. Keep the summary under 80 words and keep only guidance relevant to the given aspect.

# Required Information
The aspect to be refined is: {Refined_Aspect}
Past content reflections on this aspect:
{Reflections}

# Output Format
{
    "summary": <string>  // The summarized reflections.
}"""

STRATEGY_CRITERIA = (
    "accuracy (no aspect outside the user's goal is refined), completeness (no aspect "
    "in the user's goal is left out), and priority (more important aspects are refined "
    "earlier and more often)"
)

CONTENT_CRITERIA = (
    "following the refinement instructions, covering necessary details, and excluding "
    "irrelevant content"
)

DEFAULT_TEMPLATES = {
    "planner": PLANNER,
    "refiner": REFINER,
    "strategic_reflector": STRATEGIC_REFLECTOR,
    "content_reflector": CONTENT_REFLECTOR,
    "summarizer": SUMMARIZER,
}

REQUIRED_SLOTS = {"planner": "Max_Count", "refiner": "Max_Length"}


@dataclass(frozen=True)
class PromptCatalog:
    templates: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    background: str = BACKGROUND
    strategy_criteria: str = STRATEGY_CRITERIA
    content_criteria: str = CONTENT_CRITERIA

    def __post_init__(self) -> None:
        for role in ROLES:
            template = self.templates.get(role)
            if template is None:
                raise TemplateError(f"prompt catalog lacks role {role!r}")
            if USER_SECTION not in template:
                raise TemplateError(f"{role} template lacks a '{USER_SECTION}' section")
        for role, slot in REQUIRED_SLOTS.items():
            if slot not in PLACEHOLDER.findall(self.templates[role]):
                raise TemplateError(f"{role} template must contain {{{slot}}}")

    def render(self, role: str, values: Mapping[str, str]) -> tuple[str, str]:
        """Fill a role template; returns ``(system_prompt, user_prompt)``."""
        values = {"Background_Clarification": self.background, **values}
        head, _, tail = self.templates[role].partition(USER_SECTION)
        system = fill_placeholders(head.rstrip("\n"), values)
        user = fill_placeholders(USER_SECTION + tail, values)
        return system, user


def load_prompt_dir(path: str | Path) -> PromptCatalog:
    """Catalog with roles overridden by ``<role>.txt`` files found in ``path``.

    An optional ``background.txt`` replaces the shared background section.
    """
    root = Path(path)
    if not root.is_dir():
        raise TemplateError(f"prompt directory {root} does not exist")
    templates = dict(DEFAULT_TEMPLATES)
    for role in ROLES:
        f = root / f"{role}.txt"
        if f.exists():
            templates[role] = f.read_text(encoding="utf-8").rstrip("\n")
    bg = root / "background.txt"
    background = bg.read_text(encoding="utf-8").rstrip("\n") if bg.exists() else BACKGROUND
    return PromptCatalog(templates=templates, background=background)
