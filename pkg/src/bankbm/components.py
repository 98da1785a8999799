"""Canonical portfolio component names shared across the library.

Order matters: it is the column order of the ingestion CSV, the feature
order of fitted forests, and the coordinate order of contribution vectors.
"""

COMPONENTS = (
    "customer_loans",
    "interbank_lending",
    "derivative_exposures",
    "securities",
    "customer_deposits",
    "interbank_borrowing",
    "short_term_funding",
    "long_term_funding",
    "equity",
)

N_COMPONENTS = len(COMPONENTS)

COMPONENT_INDEX = {name: i for i, name in enumerate(COMPONENTS)}

SIZE_LABELS = ("Large", "Medium", "Small")

SIZE_LETTER = {"Large": "L", "Medium": "M", "Small": "S"}
LETTER_SIZE = {v: k for k, v in SIZE_LETTER.items()}
