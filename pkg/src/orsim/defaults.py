"""Built-in clinical content: taxonomy, rotations, routes, rules, reference docs.

Everything a runnable episode needs ships here so the package works out of
the box; corpora and rule files on disk can override any of it.
"""

from __future__ import annotations

import re

from .domain import (
    D1,
    D2,
    D3,
    D4,
    D5,
    DiseaseLabel,
    EventTrigger,
    KNOWN_DISEASES,
    MriReport,
    PhaseId,
    PlanStep,
    RoleId,
    RouteLabel,
    Subtask,
    SubtaskTaxonomy,
    SurgicalCase,
)
from .knowledge import KnowledgeDoc
from .records import CaseFile, Corpus

ROUTE_TRANSSPHENOIDAL = "endoscopic endonasal transsphenoidal approach"
ROUTE_EXPANDED = "expanded endoscopic endonasal approach"
ROUTE_COMBINED = "combined transcranial and endonasal approach"

DISEASE_ROUTES: dict[str, str] = {
    D1.code: ROUTE_TRANSSPHENOIDAL,
    D2.code: ROUTE_EXPANDED,
    D3.code: ROUTE_COMBINED,
    D4.code: ROUTE_TRANSSPHENOIDAL,
    D5.code: ROUTE_EXPANDED,
}


def default_route_aliases() -> dict[str, str]:
    return {
        "transsphenoidal approach": ROUTE_TRANSSPHENOIDAL,
        "transsphenoidal": ROUTE_TRANSSPHENOIDAL,
        "eets": ROUTE_TRANSSPHENOIDAL,
        "expanded endonasal approach": ROUTE_EXPANDED,
        "eea": ROUTE_EXPANDED,
        "transcranial approach": ROUTE_COMBINED,
        "craniotomy": ROUTE_COMBINED,
    }


_SUBTASKS: list[tuple[str, str, PhaseId]] = [
    ("transfer.verify_identity", "Verify patient identity and wristband", PhaseId.PATIENT_TRANSFER),
    ("transfer.confirm_consent", "Confirm signed surgical consent", PhaseId.PATIENT_TRANSFER),
    ("transfer.position_patient", "Position and secure the patient", PhaseId.PATIENT_TRANSFER),
    ("anesthesia.induction", "Induce general anesthesia", PhaseId.ANESTHESIA),
    ("anesthesia.airway", "Secure the airway", PhaseId.ANESTHESIA),
    ("anesthesia.baseline_vitals", "Record baseline vital signs", PhaseId.ANESTHESIA),
    ("prep.sterile_field", "Establish the sterile field", PhaseId.PREPARATION),
    ("prep.instruments", "Count and lay out instruments", PhaseId.PREPARATION),
    ("prep.imaging_review", "Review imaging at the table", PhaseId.PREPARATION),
    ("op.approach", "Open the surgical corridor", PhaseId.SURGICAL_OPERATION),
    ("op.exposure", "Expose the lesion", PhaseId.SURGICAL_OPERATION),
    ("op.resection", "Resect the lesion", PhaseId.SURGICAL_OPERATION),
    ("op.hemostasis", "Achieve hemostasis", PhaseId.SURGICAL_OPERATION),
    ("op.closure", "Close the approach", PhaseId.SURGICAL_OPERATION),
    ("postop.recovery_handoff", "Hand off to recovery", PhaseId.POSTOPERATIVE_CARE),
    ("postop.vitals_monitoring", "Monitor postoperative vitals", PhaseId.POSTOPERATIVE_CARE),
    ("postop.pain_management", "Manage pain and nausea", PhaseId.POSTOPERATIVE_CARE),
]


def default_taxonomy() -> SubtaskTaxonomy:
    by_phase: dict[PhaseId, list[Subtask]] = {p: [] for p in PhaseId}
    for sid, desc, phase in _SUBTASKS:
        by_phase[phase].append(Subtask(sid, desc, phase))
    return SubtaskTaxonomy(by_phase)


def default_gold_subtasks() -> dict[PhaseId, tuple[str, ...]]:
    out: dict[PhaseId, list[str]] = {p: [] for p in PhaseId}
    for sid, _, phase in _SUBTASKS:
        out[phase].append(sid)
    return {p: tuple(ids) for p, ids in out.items()}


def default_gold_plan() -> tuple[PlanStep, ...]:
    taxonomy = default_taxonomy()
    return tuple(
        PlanStep(st.subtask_id, st.description, st.phase)
        for st in taxonomy.for_phase(PhaseId.SURGICAL_OPERATION)
    )


def default_turn_policy() -> dict[PhaseId, tuple[RoleId, ...]]:
    return {
        PhaseId.PATIENT_TRANSFER: (
            RoleId.WARD_NURSE,
            RoleId.PATIENT,
            RoleId.ROOM_NURSE,
        ),
        PhaseId.ANESTHESIA: (RoleId.ANESTHETIST, RoleId.PATIENT),
        PhaseId.PREPARATION: (
            RoleId.SCRUB_NURSE,
            RoleId.ROOM_NURSE,
            RoleId.SURGEON_ASSISTANT,
        ),
        PhaseId.SURGICAL_OPERATION: (
            RoleId.CHIEF_SURGEON,
            RoleId.SURGEON_ASSISTANT,
            RoleId.SCRUB_NURSE,
            RoleId.ANESTHETIST,
        ),
        PhaseId.POSTOPERATIVE_CARE: (
            RoleId.WARD_NURSE,
            RoleId.ANESTHETIST,
            RoleId.PATIENT,
        ),
    }


# --- scripted rule table ---

_PLAN_DIRECTIVE = (
    "[[ACTION: propose_plan=op.approach;op.exposure;op.resection;"
    "op.hemostasis;op.closure]]"
)

_WORKING_ROLES = (
    RoleId.CHIEF_SURGEON,
    RoleId.SURGEON_ASSISTANT,
    RoleId.SCRUB_NURSE,
    RoleId.WARD_NURSE,
    RoleId.ROOM_NURSE,
    RoleId.ANESTHETIST,
)


def default_rules_payload() -> dict:
    """The stock deterministic script for every role.

    Rule order matters: copilot decisions first, then the chief surgeon's
    one-off route call (keyed to op.approach still being open), then
    standby lines for idle workers. Fallbacks carry the common case of
    simply doing the next open subtask.
    """
    rules: list[dict] = []
    for disease in KNOWN_DISEASES:
        route = DISEASE_ROUTES[disease.code]
        # anchor on the case's own condition line, not reference prose
        rules.append(
            {
                "role": RoleId.SURGERY_COPILOT.value,
                "phase": "any",
                "pattern": (
                    "Condition: " + re.escape(disease.name) + r"[\s\S]*select_route"
                ),
                "reply": (
                    f"Imaging and history point to {disease.name.lower()}; "
                    f"the preferred corridor is the {route}.\n"
                    f"[[ACTION: select_route={route}]]"
                ),
            }
        )
    rules.append(
        {
            "role": RoleId.SURGERY_COPILOT.value,
            "phase": "any",
            "pattern": r"propose_plan",
            "reply": (
                "Recommended operative sequence: approach, exposure, resection, "
                f"hemostasis, closure.\n{_PLAN_DIRECTIVE}"
            ),
        }
    )
    for disease in KNOWN_DISEASES:
        route = DISEASE_ROUTES[disease.code]
        # fires once: only while op.approach heads the open-subtask list
        rules.append(
            {
                "role": RoleId.CHIEF_SURGEON.value,
                "phase": PhaseId.SURGICAL_OPERATION.value,
                "pattern": (
                    "Condition: "
                    + re.escape(disease.name)
                    + r"[\s\S]*Open subtasks this phase: op\.approach"
                ),
                "reply": (
                    f"We will proceed via the {route}.\n"
                    f"[[ACTION: select_route={route}]]"
                ),
            }
        )
    for role in _WORKING_ROLES:
        rules.append(
            {
                "role": role.value,
                "phase": "any",
                "pattern": r"\A(?![\s\S]*Open subtasks this phase)",
                "reply": "Standing by.\n[[ACTION: noop]]",
            }
        )
    fallbacks = {
        RoleId.PATIENT.value: (
            "I'm holding up alright, just a little nervous.\n"
            "[[ACTION: monitor=self-report]]"
        ),
        RoleId.SURGERY_COPILOT.value: (
            "Defaulting to the standard corridor.\n"
            f"[[ACTION: select_route={ROUTE_TRANSSPHENOIDAL}]]"
        ),
        "any": (
            "Proceeding with {next_subtask}.\n"
            "[[ACTION: complete_subtask={next_subtask}]]"
        ),
    }
    return {"format_version": "rules/1", "rules": rules, "fallbacks": fallbacks}


# --- reference material ---


def default_knowledge_docs() -> list[KnowledgeDoc]:
    docs = [
        KnowledgeDoc(
            doc_id="route-selection-guide",
            role="all",
            body=(
                "Route selection for pituitary lesions. A primary non-functioning "
                "pituitary adenoma is usually reached by the endoscopic endonasal "
                "transsphenoidal approach, which gives midline access to the sella "
                "with low morbidity. Recurrent nonfunctioning pituitary adenoma "
                "often requires the expanded endoscopic endonasal approach because "
                "scar tissue distorts the original corridor. Aggressive "
                "nonfunctioning pituitary adenoma with cavernous sinus or "
                "suprasellar invasion may need a combined transcranial and "
                "endonasal approach. Primary pituitary adrenocorticotroph adenoma "
                "is typically small and central, favoring the endoscopic endonasal "
                "transsphenoidal approach with careful gland exploration. "
                "Recurrent pituitary adrenocorticotroph adenoma calls for the "
                "expanded endoscopic endonasal approach and intraoperative hormone "
                "sampling."
            ),
        ),
        KnowledgeDoc(
            doc_id="operative-sequence",
            role="all",
            body=(
                "Standard operative sequence for sellar surgery. First open the "
                "surgical corridor and confirm landmarks. Second expose the lesion "
                "and its capsule. Third resect the lesion in a controlled, "
                "piecemeal fashion. Fourth achieve hemostasis, inspecting the "
                "cavity for bleeding points. Fifth close the approach with graded "
                "reconstruction. Skipping or reordering steps raises the risk of "
                "cerebrospinal fluid leak and postoperative hematoma."
            ),
        ),
        KnowledgeDoc(
            doc_id="anesthesia-protocol",
            role=RoleId.ANESTHETIST.value,
            body=(
                "Anesthesia protocol. Induce with a short-acting agent, secure the "
                "airway with an armored tube, and record baseline vitals before "
                "incision. During resection watch for abrupt blood pressure "
                "changes; sellar manipulation can trigger bradycardia. Keep mean "
                "arterial pressure steady and report any sustained drop to the "
                "chief surgeon at once."
            ),
        ),
        KnowledgeDoc(
            doc_id="transfer-checklist",
            role=RoleId.WARD_NURSE.value,
            body=(
                "Transfer checklist. Verify patient identity against the wristband "
                "and chart. Confirm the signed surgical consent names the correct "
                "procedure and side. Position and secure the patient, padding "
                "pressure points. Any mismatch stops the transfer until resolved."
            ),
        ),
        KnowledgeDoc(
            doc_id="sterile-preparation",
            role=RoleId.SCRUB_NURSE.value,
            body=(
                "Sterile preparation. Establish the sterile field before any "
                "instrument leaves its tray. Count instruments and sponges aloud "
                "with the circulating nurse, and repeat the count at closure. "
                "Review the imaging displayed at the table with the assistant so "
                "the expected corridor matches the setup."
            ),
        ),
        KnowledgeDoc(
            doc_id="postoperative-care",
            role=RoleId.WARD_NURSE.value,
            body=(
                "Postoperative care. Hand off to recovery with a structured "
                "report covering the route used, blood loss, and airway notes. "
                "Monitor vitals every fifteen minutes for the first two hours; "
                "watch sodium balance after pituitary work. Manage pain and "
                "nausea early, and escalate visual changes immediately."
            ),
        ),
        KnowledgeDoc(
            doc_id="event-response",
            role=RoleId.SURGERY_COPILOT.value,
            body=(
                "Event response playbook. When bleeding is reported during "
                "resection, pause advancing instruments, irrigate, and identify "
                "the source before continuing. When blood pressure drops, confirm "
                "with the anesthetist and hold manipulation. When two situations "
                "stack up, announce priorities out loud: airway and bleeding "
                "always outrank schedule. Resume the subtask queue only after the "
                "alert is acknowledged."
            ),
        ),
    ]
    return docs


# --- built-in demonstration corpus ---

_HISTORIES: dict[str, str] = {
    D1.code: (
        "Eight months of progressive bitemporal visual field loss and headache. "
        "No prior pituitary treatment. Endocrine panel shows no hypersecretion."
    ),
    D2.code: (
        "Transsphenoidal resection four years ago with residual regrowth on "
        "surveillance imaging. No hormone excess; vision newly blurred."
    ),
    D3.code: (
        "Rapidly enlarging sellar mass over six months with cavernous sinus "
        "invasion and third nerve palsy. No endocrine hypersecretion."
    ),
    D4.code: (
        "Centripetal weight gain, proximal weakness, and refractory hypertension. "
        "Biochemistry confirms ACTH-dependent cortisol excess; no prior surgery."
    ),
    D5.code: (
        "Persistent hypercortisolism two years after pituitary surgery. "
        "Petrosal sinus sampling again lateralizes to the gland."
    ),
}

_MRI: dict[str, MriReport] = {
    D1.code: MriReport(
        findings=(
            "Sellar mass 21 mm with suprasellar extension abutting the optic "
            "chiasm; posterior pituitary bright spot preserved."
        ),
        impression="Macroadenoma without cavernous invasion.",
        lesion_attributes={"size_mm": "21", "invasion": "none"},
    ),
    D2.code: MriReport(
        findings=(
            "Recurrenct 14 mm enhancing tissue along the right sellar margin with "
            "postsurgical fat packing and distorted midline landmarks."
        ),
        impression="Recurrent adenoma in a scarred field.",
        lesion_attributes={"size_mm": "14", "invasion": "none", "reoperation": "yes"},
    ),
    D3.code: MriReport(
        findings=(
            "28 mm sellar mass invading the left cavernous sinus, encasing the "
            "carotid, with suprasellar extension elevating the chiasm."
        ),
        impression="Invasive macroadenoma, Knosp grade 4.",
        lesion_attributes={"size_mm": "28", "invasion": "cavernous sinus"},
    ),
    D4.code: MriReport(
        findings=(
            "6 mm hypoenhancing microadenoma in the left hemigland; infundibulum "
            "midline; cavernous sinuses clear."
        ),
        impression="Microadenoma consistent with corticotroph source.",
        lesion_attributes={"size_mm": "6", "invasion": "none"},
    ),
    D5.code: MriReport(
        findings=(
            "Equivocal 5 mm hypointensity near prior resection bed; subtle "
            "asymmetric gland enhancement on dynamic sequences."
        ),
        impression="Possible recurrent microadenoma in the operative bed.",
        lesion_attributes={"size_mm": "5", "invasion": "none", "reoperation": "yes"},
    ),
}


def standard_triggers(case_id: str) -> tuple[EventTrigger, ...]:
    """Two intraoperative complications keyed to subtask mentions."""
    return (
        EventTrigger(
            event_id=f"{case_id}-bleed",
            pattern=r"op\.resection",
            payload="Brisk bleeding at the resection site.",
            priority=5,
            phase=PhaseId.SURGICAL_OPERATION,
        ),
        EventTrigger(
            event_id=f"{case_id}-pressure",
            pattern=r"op\.closure",
            payload="Transient drop in mean arterial pressure.",
            priority=3,
            phase=PhaseId.SURGICAL_OPERATION,
        ),
    )


def make_case(
    case_id: str,
    disease: DiseaseLabel,
    demographics: dict[str, str] | None = None,
    history: str | None = None,
    mri: MriReport | None = None,
    synthetic: bool = False,
    with_triggers: bool = True,
    extra: dict[str, object] | None = None,
) -> CaseFile:
    """Assemble a complete case around the built-in taxonomy and plan."""
    route = DISEASE_ROUTES.get(disease.code, ROUTE_TRANSSPHENOIDAL)
    case = SurgicalCase(
        case_id=case_id,
        demographics=demographics or {"age": "52", "sex": "F"},
        history=history if history is not None else _HISTORIES.get(disease.code, ""),
        mri_report=mri if mri is not None else _MRI.get(disease.code),
        disease_label=disease,
        gold_route=RouteLabel(route),
        gold_plan=default_gold_plan(),
        gold_subtasks=default_gold_subtasks(),
        synthetic=synthetic,
        extra=extra or {},
    )
    triggers = standard_triggers(case_id) if with_triggers else ()
    return CaseFile(case=case, triggers=triggers)


def builtin_corpus() -> Corpus:
    """Five demonstration cases, one per built-in condition."""
    bundles = tuple(
        make_case(f"demo-{disease.code.lower()}", disease)
        for disease in KNOWN_DISEASES
    )
    return Corpus(
        name="builtin-demo",
        bundles=bundles,
        route_aliases=default_route_aliases(),
    )
