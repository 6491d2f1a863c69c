"""Global bounds for sums of rational functions via moment relaxations."""
