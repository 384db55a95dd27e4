# End-to-end experiment checks
