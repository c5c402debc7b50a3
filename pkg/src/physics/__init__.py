"""Channel, energy and cost formulas."""
