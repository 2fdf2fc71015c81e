# 建立 ltlf.py → 有限軌跡時序邏輯模組
# 公式語法樹、文字解析、有限序列語意、否定正規形與公式推進 (progression)

import re
from dataclasses import dataclass, field

from errors import InvalidInputError, ParseError

# 運算子優先序 (數字越大越緊)
_PREC_IMPLIES = 1
_PREC_OR = 2
_PREC_AND = 3
_PREC_UNTIL = 4
_PREC_UNARY = 5
_PREC_ATOM = 6


# ==================== 語法樹 ====================
@dataclass(frozen=True)
class Formula:
    """LTLf 公式節點基底；pos 為 (行, 欄) 來源位置，不參與相等比較"""

    pos: tuple = field(default=None, compare=False, repr=False, kw_only=True)

    precedence = _PREC_ATOM

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class Const(Formula):
    value: bool

    def __str__(self):
        return 'true' if self.value else 'false'


@dataclass(frozen=True)
class Atom(Formula):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula
    precedence = _PREC_UNARY

    def __str__(self):
        return f"!{_wrap(self.arg, _PREC_UNARY)}"


@dataclass(frozen=True)
class Globally(Formula):
    arg: Formula
    precedence = _PREC_UNARY

    def __str__(self):
        return f"G {_wrap(self.arg, _PREC_UNARY)}"


@dataclass(frozen=True)
class Next(Formula):
    arg: Formula
    precedence = _PREC_UNARY

    def __str__(self):
        return f"X {_wrap(self.arg, _PREC_UNARY)}"


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula
    precedence = _PREC_AND

    def __str__(self):
        return f"{_wrap(self.left, _PREC_AND)} & {_wrap(self.right, _PREC_AND + 1)}"


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula
    precedence = _PREC_OR

    def __str__(self):
        return f"{_wrap(self.left, _PREC_OR)} | {_wrap(self.right, _PREC_OR + 1)}"


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula
    precedence = _PREC_IMPLIES

    def __str__(self):
        return f"{_wrap(self.left, _PREC_IMPLIES + 1)} -> {_wrap(self.right, _PREC_IMPLIES)}"


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula
    precedence = _PREC_UNTIL

    def __str__(self):
        return f"{_wrap(self.left, _PREC_UNTIL + 1)} U {_wrap(self.right, _PREC_UNTIL)}"


@dataclass(frozen=True)
class WeakUntil(Formula):
    left: Formula
    right: Formula
    precedence = _PREC_UNTIL

    def __str__(self):
        return f"{_wrap(self.left, _PREC_UNTIL + 1)} W {_wrap(self.right, _PREC_UNTIL)}"


TRUE = Const(True)
FALSE = Const(False)


def _wrap(node, minimum):
    text = str(node)
    return f"({text})" if node.precedence < minimum else text


def conjoin(formulas):
    """依序以 ∧ 串接 (左結合)；空列表為 true"""
    formulas = list(formulas)
    if not formulas:
        return TRUE
    result = formulas[0]
    for f in formulas[1:]:
        result = And(result, f)
    return result


def disjoin(formulas):
    formulas = list(formulas)
    if not formulas:
        return FALSE
    result = formulas[0]
    for f in formulas[1:]:
        result = Or(result, f)
    return result


def atoms(formula):
    """公式中出現的事件名稱集合"""
    if isinstance(formula, Atom):
        return {formula.name}
    if isinstance(formula, Const):
        return set()
    if isinstance(formula, (Not, Globally, Next)):
        return atoms(formula.arg)
    return atoms(formula.left) | atoms(formula.right)


# ==================== 詞法分析 ====================
_TOKEN = re.compile(r'\s*(?:(~>|->|[()!&|])|([A-Za-z_][A-Za-z0-9_]*))')


@dataclass(frozen=True)
class Token:
    kind: str      # 'op' / 'ident' / 'end'
    text: str
    line: int
    column: int


def tokenize(text, line=1, column_offset=0):
    """
    功能:
        將一行公式文字切成記號

    參數:
        text: 公式文字
        line: 行號 (錯誤訊息用)
        column_offset: 欄位偏移 (text 在原始行中的起始位置)

    返回:
        tokens: Token 列表，以 'end' 結尾
    """
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if not match or match.end() == pos:
            column = column_offset + pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1
            raise ParseError(f"無法辨識的字元: {text[pos:].lstrip()[:1]!r}", line, column)
        start = match.start(1) if match.group(1) else match.start(2)
        if match.group(1):
            tokens.append(Token('op', match.group(1), line, column_offset + start + 1))
        else:
            tokens.append(Token('ident', match.group(2), line, column_offset + start + 1))
        pos = match.end()
    tokens.append(Token('end', '', line, column_offset + len(text) + 1))
    return tokens


# ==================== 語法分析 ====================
class FormulaParser:
    """
    遞迴下降解析器

    優先序由低到高: ->(右結合) < | < & < U, W(右結合) < ! G X
    G、X、U、W 只有在後面接著運算元時才視為運算子，否則視為事件名稱
    """

    def __init__(self, tokens, alphabet=None):
        self.tokens = tokens
        self.index = 0
        self.alphabet = alphabet

    @property
    def current(self):
        return self.tokens[self.index]

    def peek(self, offset=1):
        k = min(self.index + offset, len(self.tokens) - 1)
        return self.tokens[k]

    def advance(self):
        token = self.current
        self.index += 1
        return token

    def error(self, message, token=None):
        token = token or self.current
        return ParseError(message, token.line, token.column)

    @staticmethod
    def starts_operand(token):
        return token.kind == 'ident' or token.text in ('(', '!')

    def parse(self):
        """解析到 'end' 或 '~>' 為止"""
        if self.current.kind == 'end' or self.current.text == '~>':
            raise self.error("缺少公式")
        return self.parse_implies()

    def expect_end(self):
        if self.current.kind != 'end':
            raise self.error(f"多餘的內容: {self.current.text!r}")

    def parse_implies(self):
        left = self.parse_or()
        if self.current.text == '->':
            token = self.advance()
            right = self.parse_implies()
            return Implies(left, right, pos=(token.line, token.column))
        return left

    def parse_or(self):
        left = self.parse_and()
        while self.current.text == '|':
            token = self.advance()
            left = Or(left, self.parse_and(), pos=(token.line, token.column))
        return left

    def parse_and(self):
        left = self.parse_until()
        while self.current.text == '&':
            token = self.advance()
            left = And(left, self.parse_until(), pos=(token.line, token.column))
        return left

    def parse_until(self):
        left = self.parse_unary()
        token = self.current
        if token.kind == 'ident' and token.text in ('U', 'W') and self.starts_operand(self.peek()):
            self.advance()
            right = self.parse_until()
            node = Until if token.text == 'U' else WeakUntil
            return node(left, right, pos=(token.line, token.column))
        return left

    def parse_unary(self):
        token = self.current
        if token.text == '!':
            self.advance()
            return Not(self.parse_unary(), pos=(token.line, token.column))
        if token.kind == 'ident' and token.text in ('G', 'X') and self.starts_operand(self.peek()):
            self.advance()
            node = Globally if token.text == 'G' else Next
            return node(self.parse_unary(), pos=(token.line, token.column))
        return self.parse_primary()

    def parse_primary(self):
        token = self.current
        if token.text == '(':
            self.advance()
            inner = self.parse_implies()
            if self.current.text != ')':
                raise self.error("缺少右括號 ')'")
            self.advance()
            return inner
        if token.kind == 'ident':
            self.advance()
            if token.text in ('true', 'false'):
                return Const(token.text == 'true', pos=(token.line, token.column))
            if self.alphabet is not None and token.text not in self.alphabet:
                raise self.error(f"事件 {token.text} 不在字母表中", token)
            return Atom(token.text, pos=(token.line, token.column))
        if token.kind == 'end':
            raise self.error("公式不完整")
        raise self.error(f"預期運算元，遇到 {token.text!r}")


def parse_formula(text, alphabet=None, line=1):
    """
    功能:
        解析單一 LTLf 公式

    參數:
        text: 公式文字，例如 "G (D -> G !X P)"
        alphabet: 宣告的字母表 (None 表示不檢查事件名稱)
        line: 行號

    返回:
        formula: Formula

    範例:
        >>> str(parse_formula("G (D -> G !X P)"))
        'G (D -> G !X P)'
    """
    parser = FormulaParser(tokenize(text, line), alphabet)
    formula = parser.parse()
    parser.expect_end()
    return formula


# ==================== 有限序列語意 ====================
def ltlf_eval(formula, sequence, position=0):
    """
    功能:
        在有限事件序列上判斷公式是否成立 (編譯結果的比對基準)

    說明:
        每個位置恰好發生一個事件；G 在空後綴上為真，X 在最後位置為假，
        W 不要求右側最終成立
    """
    n = len(sequence)
    i = position
    if isinstance(formula, Const):
        return formula.value
    if isinstance(formula, Atom):
        return i < n and sequence[i] == formula.name
    if isinstance(formula, Not):
        return not ltlf_eval(formula.arg, sequence, i)
    if isinstance(formula, And):
        return ltlf_eval(formula.left, sequence, i) and ltlf_eval(formula.right, sequence, i)
    if isinstance(formula, Or):
        return ltlf_eval(formula.left, sequence, i) or ltlf_eval(formula.right, sequence, i)
    if isinstance(formula, Implies):
        return not ltlf_eval(formula.left, sequence, i) or ltlf_eval(formula.right, sequence, i)
    if isinstance(formula, Globally):
        return all(ltlf_eval(formula.arg, sequence, j) for j in range(i, n))
    if isinstance(formula, Next):
        return i + 1 < n and ltlf_eval(formula.arg, sequence, i + 1)
    if isinstance(formula, (Until, WeakUntil)):
        for j in range(i, n):
            if ltlf_eval(formula.right, sequence, j):
                return True
            if not ltlf_eval(formula.left, sequence, j):
                return False
        return isinstance(formula, WeakUntil)
    raise InvalidInputError(f"未知的公式節點: {formula!r}")


# ==================== 否定正規形 ====================
# 內部表示為可雜湊的 tuple：
#   ('true',) ('false',) ('atom', e) ('natom', e) ('and', args) ('or', args)
#   ('next', x) ('wnext', x) ('until', l, r) ('release', l, r)
#   ('nonempty',) 後綴非空 / ('empty',) 後綴為空
N_TRUE = ('true',)
N_FALSE = ('false',)
N_NONEMPTY = ('nonempty',)
N_EMPTY = ('empty',)


def _literal_sign(node):
    if node[0] == 'atom':
        return node[1], True
    if node[0] == 'natom':
        return node[1], False
    return None


def make_and(*args):
    """化簡後的合取：攤平、去重、常數吸收、互斥事件與矛盾文字化為 false"""
    flat = set()
    for arg in args:
        if arg == N_FALSE:
            return N_FALSE
        if arg == N_TRUE:
            continue
        if arg[0] == 'and':
            flat.update(arg[1])
        else:
            flat.add(arg)
    positives = {node[1] for node in flat if node[0] == 'atom'}
    negatives = {node[1] for node in flat if node[0] == 'natom'}
    # 同一位置只有一個事件
    if len(positives) > 1 or positives & negatives:
        return N_FALSE
    if N_EMPTY in flat and (N_NONEMPTY in flat or positives):
        return N_FALSE
    if positives:
        flat = {node for node in flat if node[0] != 'natom'}
    if not flat:
        return N_TRUE
    if len(flat) == 1:
        return next(iter(flat))
    return ('and', tuple(sorted(flat, key=repr)))


def make_or(*args):
    """化簡後的析取：攤平、去重、常數吸收、a ∨ ¬a 化為 true"""
    flat = set()
    for arg in args:
        if arg == N_TRUE:
            return N_TRUE
        if arg == N_FALSE:
            continue
        if arg[0] == 'or':
            flat.update(arg[1])
        else:
            flat.add(arg)
    positives = {node[1] for node in flat if node[0] == 'atom'}
    negatives = {node[1] for node in flat if node[0] == 'natom'}
    # 兩個不同事件不會同時發生，¬a ∨ ¬b 恆真
    if positives & negatives or len(negatives) > 1 or (N_EMPTY in flat and N_NONEMPTY in flat):
        return N_TRUE
    if not flat:
        return N_FALSE
    if len(flat) == 1:
        return next(iter(flat))
    return ('or', tuple(sorted(flat, key=repr)))


def nnf(formula, negate=False):
    """
    功能:
        轉為否定正規形 (否定只出現在事件文字上)

    說明:
        G x = false R x；l W r = r R (r ∨ l)；¬X x = WX ¬x；¬(l U r) = ¬l R ¬r
    """
    if isinstance(formula, Const):
        return N_TRUE if formula.value != negate else N_FALSE
    if isinstance(formula, Atom):
        return ('natom' if negate else 'atom', formula.name)
    if isinstance(formula, Not):
        return nnf(formula.arg, not negate)
    if isinstance(formula, And):
        join = make_or if negate else make_and
        return join(nnf(formula.left, negate), nnf(formula.right, negate))
    if isinstance(formula, Or):
        join = make_and if negate else make_or
        return join(nnf(formula.left, negate), nnf(formula.right, negate))
    if isinstance(formula, Implies):
        # l → r ≡ ¬l ∨ r
        if negate:
            return make_and(nnf(formula.left), nnf(formula.right, True))
        return make_or(nnf(formula.left, True), nnf(formula.right))
    if isinstance(formula, Next):
        return ('wnext', nnf(formula.arg, True)) if negate else ('next', nnf(formula.arg))
    if isinstance(formula, Globally):
        if negate:
            return ('until', N_TRUE, nnf(formula.arg, True))
        return ('release', N_FALSE, nnf(formula.arg))
    if isinstance(formula, Until):
        if negate:
            return ('release', nnf(formula.left, True), nnf(formula.right, True))
        return ('until', nnf(formula.left), nnf(formula.right))
    if isinstance(formula, WeakUntil):
        left, right = formula.left, formula.right
        if negate:
            # ¬(l W r) ≡ ¬r U (¬r ∧ ¬l)
            return ('until', nnf(right, True), make_and(nnf(right, True), nnf(left, True)))
        return ('release', nnf(right), make_or(nnf(right), nnf(left)))
    raise InvalidInputError(f"未知的公式節點: {formula!r}")


def progress(node, event):
    """
    功能:
        公式推進：讀入一個事件後，剩餘後綴必須滿足的公式

    參數:
        node: 否定正規形公式
        event: 目前位置的事件

    返回:
        residual: 化簡後的否定正規形公式
    """
    kind = node[0]
    if kind in ('true', 'false'):
        return node
    if kind == 'atom':
        return N_TRUE if node[1] == event else N_FALSE
    if kind == 'natom':
        return N_FALSE if node[1] == event else N_TRUE
    if kind == 'and':
        return make_and(*(progress(arg, event) for arg in node[1]))
    if kind == 'or':
        return make_or(*(progress(arg, event) for arg in node[1]))
    if kind == 'next':
        return make_and(node[1], N_NONEMPTY)
    if kind == 'wnext':
        return make_or(node[1], N_EMPTY)
    if kind == 'until':
        return make_or(progress(node[2], event), make_and(progress(node[1], event), node))
    if kind == 'release':
        return make_and(progress(node[2], event), make_or(progress(node[1], event), node))
    if kind == 'nonempty':
        return N_TRUE
    if kind == 'empty':
        return N_FALSE
    raise InvalidInputError(f"未知的正規形節點: {node!r}")


def final(node):
    """公式在空後綴上是否成立 (決定推進狀態是否接受)"""
    kind = node[0]
    if kind == 'and':
        return all(final(arg) for arg in node[1])
    if kind == 'or':
        return any(final(arg) for arg in node[1])
    return kind in ('true', 'natom', 'wnext', 'release', 'empty')


def format_nnf(node):
    """正規形公式的可讀字串 (除錯與 DOT 標籤用)"""
    kind = node[0]
    if kind in ('true', 'false'):
        return kind
    if kind == 'atom':
        return node[1]
    if kind == 'natom':
        return f"!{node[1]}"
    if kind in ('and', 'or'):
        sep = ' & ' if kind == 'and' else ' | '
        return '(' + sep.join(format_nnf(arg) for arg in node[1]) + ')'
    if kind == 'next':
        return f"X {format_nnf(node[1])}"
    if kind == 'wnext':
        return f"WX {format_nnf(node[1])}"
    if kind == 'until':
        return f"({format_nnf(node[1])} U {format_nnf(node[2])})"
    if kind == 'release':
        return f"({format_nnf(node[1])} R {format_nnf(node[2])})"
    return kind
