"""A deterministic fake chat model for fixtures and tests.

Responses are a pure function of the prompt text, so recording a cassette
from this transport and replaying it later agree byte for byte. The canned
tactic sources below are what the fixture pipeline "mines"; one of them is
deliberately broken on first emission so the repair loop has work to do, and
one is deliberately over-general so the rate band has something to discard.
"""

from __future__ import annotations

TACTIC_INDUCT_THEN_CLOSE = """\
tactic induct_then_close :=
  match goal with
  | forall nat => (induction; simpl; try rewrite; reflexivity)
  | forall list => (induction; simpl; try rewrite; reflexivity)
  end"""

TACTIC_SIMPLIFY_THEN_CLOSE = """\
tactic simplify_then_close :=
  match goal with
  | _ => (simpl; try assumption; try reflexivity)
  end"""

TACTIC_CLOSE_BY_REWRITE = """\
tactic close_by_rewrite :=
  match goal with
  | _ => (simpl; try rewrite; (assumption || reflexivity))
  end"""

TACTIC_INDUCT_LIST = """\
import listlib
tactic close_simple := simpl; reflexivity
tactic induct_list :=
  match goal with
  | forall list => (induction; simpl; try rewrite; close_simple)
  end"""

TACTIC_REWRITE_APPEND = """\
tactic rewrite_append_hyp :=
  match goal with
  | hypothesis append => (rewrite; reflexivity)
  end"""

TACTIC_REWRITE_IH = """\
tactic rewrite_ih :=
  match goal with
  | hypothesis plus => (rewrite; reflexivity)
  end"""

TACTIC_INDUCT_SPLIT = """\
tactic induct_split :=
  match goal with
  | forall nat => (induction; simpl)
  | forall list => (induction; simpl)
  end"""

TACTIC_MULT_BROKEN = """\
tactic mult_normalize :=
  match goal with
  | forall positive => (induction; simpl; reflexivity)
  | conclusion mult => (simpl; try reflexivity)
  end"""

TACTIC_MULT_FIXED = """\
tactic mult_normalize :=
  match goal with
  | forall nat => (induction; simpl; try rewrite; reflexivity)
  | conclusion mult => (simpl; try reflexivity)
  end"""

TACTIC_JUNK = """\
tactic broken := match goal with
  | forall nat => induction"""

STEP_EXPLANATIONS = {
    "induction": (
        "Performs structural induction on the quantified variable, producing one "
        "base subgoal per leaf constructor and one inductive subgoal with an "
        "induction hypothesis per recursive constructor."
    ),
    "simpl": (
        "Normalizes both sides of the equation by unfolding the defining "
        "equations of the functions involved, exposing matching structure."
    ),
    "rewrite": (
        "Rewrites the conclusion left to right with a hypothesis equation, here "
        "the induction hypothesis, replacing its left side by its right side."
    ),
    "reflexivity": "Closes the goal because both sides now share a normal form.",
    "intros": "Moves the universally quantified variables into the context as fixed variables.",
}

# theorem name -> ### sections returned by the generalization step
FULL_STRATEGIES = {
    "plus_n_0": [
        (
            "Structural induction for equational goals",
            "When the goal universally quantifies a recursively built value, induct on it, "
            "normalize each subgoal with the defining equations, rewrite with the induction "
            "hypothesis where it applies, and close by reflexivity. Works for naturals and lists alike.",
        ),
        (
            "Simplify then close",
            "Equational goals often close after normalization alone: unfold the defining "
            "equations on both sides, then finish with an assumption or reflexivity.",
        ),
        (
            "Close by rewriting after normalization",
            "Normalize, rewrite once with whatever hypothesis fits, and insist on closing the "
            "goal immediately afterwards with an assumption or reflexivity.",
        ),
    ],
    "append_l_nil": [
        (
            "Structural induction for list goals",
            "Goals quantifying over a list usually yield to induction on the list followed by "
            "normalization; the cons case closes after rewriting with the induction hypothesis.",
        ),
        (
            "Exploit append hypotheses",
            "When a hypothesis equation is headed by append, rewriting the conclusion with it "
            "tends to align both sides for reflexivity.",
        ),
    ],
    "plus_n_succ": [
        (
            "Rewrite with the inductive hypothesis",
            "After induction and normalization the inductive case exposes an addition-headed "
            "induction hypothesis; rewriting with it makes both sides identical.",
        ),
    ],
    "mult_n_0": [
        (
            "Normalize multiplication heads",
            "Goals whose conclusion is headed by multiplication often reduce to the induction "
            "hypothesis after unfolding the defining equations; induct when quantified, then normalize.",
        ),
    ],
    "plus_assoc": [
        (
            "Split induction then finish each case",
            "Induct on the first quantified variable and normalize, but leave the resulting "
            "cases open: the base case usually closes automatically and the inductive case "
            "falls to a dedicated rewriting step.",
        ),
    ],
}

# theorem name -> sections when the analysis stage is skipped (raw proof input)
RAW_STRATEGIES = {
    "plus_n_0": [FULL_STRATEGIES["plus_n_0"][0]],
}

STRATEGY_CODE = {
    "Structural induction for equational goals": TACTIC_INDUCT_THEN_CLOSE,
    "Simplify then close": TACTIC_SIMPLIFY_THEN_CLOSE,
    "Close by rewriting after normalization": TACTIC_CLOSE_BY_REWRITE,
    "Structural induction for list goals": TACTIC_INDUCT_LIST,
    "Exploit append hypotheses": TACTIC_REWRITE_APPEND,
    "Rewrite with the inductive hypothesis": TACTIC_REWRITE_IH,
    "Normalize multiplication heads": TACTIC_MULT_BROKEN,
    "Split induction then finish each case": TACTIC_INDUCT_SPLIT,
}

# skip-generalization variant: theorem name -> code for the direct candidate
DIRECT_CODE = {
    "plus_n_0": TACTIC_INDUCT_THEN_CLOSE,
    "append_l_nil": TACTIC_JUNK,
    "plus_n_succ": TACTIC_JUNK,
    "mult_n_0": TACTIC_JUNK,
    "plus_assoc": TACTIC_JUNK,
}


def _theorem_name(prompt: str) -> str | None:
    for line in prompt.splitlines():
        if line.startswith("Theorem ") and ":" in line:
            return line[len("Theorem ") :].split(":", 1)[0].strip()
    return None


def _strategy_title(prompt: str) -> str | None:
    for line in prompt.splitlines():
        if line.startswith("Strategy: "):
            return line[len("Strategy: ") :].strip()
    return None


def _sections(pairs) -> str:
    return "\n\n".join(f"### {title}\n{body}" for title, body in pairs)


class ScriptedTransport:
    """Maps each pipeline prompt to a canned reply; raises on anything else."""

    def send_chat(self, messages, model_id: str) -> str:
        prompt = messages[-1][1]

        if "failed to compile" in prompt:
            if "positive" in prompt:
                return "Replacing the unknown sort fixes it:\n\n```\n" + TACTIC_MULT_FIXED + "\n```\n"
            return "Trying the same definition again:\n\n```\n" + TACTIC_JUNK + "\n```\n"

        if "Explain step" in prompt:
            step_line = next(line for line in prompt.splitlines() if line.startswith("Explain step"))
            step = step_line.split("`")[1]
            head = step.split(None, 1)[0]
            return STEP_EXPLANATIONS.get(head, f"Applies `{step}` to transform the current goal.")

        if "Identify which parts of this reasoning generalize" in prompt:
            name = _theorem_name(prompt)
            raw = "(no step analysis available" in prompt
            table = RAW_STRATEGIES if raw else FULL_STRATEGIES
            pairs = table.get(name, [])
            if not pairs:
                return "none"
            return "A few observations generalize here.\n\n" + _sections(pairs)

        if "Turn the following natural-language proof strategy" in prompt:
            title = _strategy_title(prompt)
            if title is not None and title.startswith("direct formalization of "):
                name = title[len("direct formalization of ") :]
                code = DIRECT_CODE.get(name, TACTIC_JUNK)
            else:
                code = STRATEGY_CODE.get(title or "", TACTIC_JUNK)
            return f"Formalizing the strategy as a goal-matching tactic:\n\n```\n{code}\n```\n"

        raise AssertionError(f"scripted transport got an unexpected prompt: {prompt[:120]!r}")
