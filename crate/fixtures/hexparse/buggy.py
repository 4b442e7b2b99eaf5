def createNumber(str):
    if str is None:
        return None
    if str.startswith("0x") or str.startswith("-0x"):
        return parseHex(str)
    if isAllZeros(str):
        return 0
    return parseDecimal(str)
