"""Network blocks and the relighting model assembly."""
