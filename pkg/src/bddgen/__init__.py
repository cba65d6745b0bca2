"""Generate BDD feature files from user stories with LLMs and lint them."""

__version__ = "0.1.0"
