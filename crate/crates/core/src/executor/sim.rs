//! Deterministic household simulator behind the state machine.

use std::collections::{BTreeMap, BTreeSet};

use super::{
    AnswerReply, Answerer, ExecutionTrace, ExecutionVerdict, FailureReason, FollowSignal, InteractionScript,
    RobotState, RunOptions, StateMachine, StateOutcome, SubState, TraceEntry,
};
use crate::primitives::{ActionStep, PrimitiveKind};
use crate::world::{normalize, Gender, Gesture, PersonProfile, ResolvedEntity, WorldModel};

const OPERATOR_WORDS: &[&str] = &["me", "operator", "the operator", "myself", "you"];
const PRONOUNS: &[&str] = &["her", "him", "them", "this person", "that person", "the person"];
const GENERIC_WORDS: &[&str] = &[
    "person", "someone", "somebody", "people", "human", "guest", "anyone", "anybody", "individual",
];
const FEMALE_WORDS: &[&str] = &["female", "woman", "girl", "lady"];
const MALE_WORDS: &[&str] = &["male", "man", "boy", "gentleman", "guy"];

/// What a person argument asks for. Every set field must match.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Descriptor {
    pub name: Option<String>,
    pub gender: Option<Gender>,
    pub gesture: Option<Gesture>,
    /// Refers to whoever the robot is engaged with.
    pub pronoun: bool,
    pub operator: bool,
}

impl Descriptor {
    fn matches(&self, p: &PersonProfile) -> bool {
        self.name.as_deref().is_none_or(|n| n == p.name)
            && self.gender.is_none_or(|g| g == p.gender)
            && self.gesture.is_none_or(|g| Some(g) == p.gesture)
    }
}

/// Reads a person argument: a name, a pronoun, "me", or a free description
/// with gender and gesture words. `None` when nothing in it is recognised.
pub fn parse_descriptor(text: &str, world: &WorldModel) -> Option<Descriptor> {
    let key = normalize(text);
    let mut d = Descriptor::default();
    if let ResolvedEntity::Person(name) = world.resolve(&key) {
        d.name = Some(name);
        return Some(d);
    }
    if OPERATOR_WORDS.contains(&key.as_str()) {
        d.operator = true;
        return Some(d);
    }
    if PRONOUNS.contains(&key.as_str()) {
        d.pronoun = true;
        return Some(d);
    }

    let words: Vec<&str> = key
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    let has = |set: &[&str]| words.iter().any(|w| set.contains(w));
    let mut recognised = has(GENERIC_WORDS);
    for w in &words {
        if let ResolvedEntity::Person(name) = world.resolve(w) {
            d.name = Some(name);
        }
    }
    if has(FEMALE_WORDS) {
        d.gender = Some(Gender::Female);
    } else if has(MALE_WORDS) {
        d.gender = Some(Gender::Male);
    }
    let pointing = has(&["point", "points", "pointing", "pointed"]);
    if pointing && has(&["left"]) {
        d.gesture = Some(Gesture::PointingLeft);
    } else if pointing && has(&["right"]) {
        d.gesture = Some(Gesture::PointingRight);
    } else if has(&["raise", "raises", "raising", "raised"]) && has(&["hand", "hands", "arm", "arms"]) {
        d.gesture = Some(Gesture::RaisingHand);
    }
    recognised |= d.name.is_some() || d.gender.is_some() || d.gesture.is_some();
    recognised.then_some(d)
}

struct Sim<'a> {
    world: &'a WorldModel,
    script: &'a InteractionScript,
    answerer: &'a dyn Answerer,
    options: &'a RunOptions,
    robot: RobotState,
    objects: BTreeMap<String, String>,
    persons: BTreeMap<String, String>,
    seen: BTreeSet<String>,
    grasped_any: bool,
    follow_cursor: usize,
    question_cursor: usize,
    entries: Vec<TraceEntry>,
}

type StepResult = Result<(), FailureReason>;

impl<'a> Sim<'a> {
    fn log(&mut self, step: usize, state: &str, ok: bool, observations: Vec<String>, utterances: Vec<String>) {
        self.entries.push(TraceEntry {
            step,
            state: state.to_string(),
            outcome: if ok {
                StateOutcome::Succeeded
            } else {
                StateOutcome::Failed
            },
            observations,
            utterances,
        });
    }

    fn current_room(&self) -> Option<&str> {
        self.world.room_of(&self.robot.location)
    }

    fn person_room(&self, name: &str) -> Option<&str> {
        self.persons.get(name).and_then(|loc| self.world.room_of(loc))
    }

    fn engaged_profile(&self) -> Option<&'a PersonProfile> {
        self.robot.engaged_person.as_deref().and_then(|n| self.world.person(n))
    }

    fn step(&mut self, i: usize, step: &ActionStep) -> StepResult {
        let arg = step.argument();
        match step.kind() {
            PrimitiveKind::MoveTo => self.move_to(i, arg),
            PrimitiveKind::LookForObj => self.look_for_obj(i, arg),
            PrimitiveKind::LookForPerson => self.look_for_person(i, arg),
            PrimitiveKind::Follow => self.follow(i, arg),
            PrimitiveKind::Grasp => self.grasp(i, arg),
            PrimitiveKind::PassTo => self.pass_to(i, arg),
            PrimitiveKind::Speak => {
                self.log(i, "SPEAK", true, vec![], vec![arg.to_string()]);
                Ok(())
            }
            PrimitiveKind::Answer => self.answer(i),
        }
    }

    fn finish(&mut self, i: usize, state: &str, result: Result<String, FailureReason>) -> StepResult {
        match result {
            Ok(obs) => {
                self.log(i, state, true, vec![obs], vec![]);
                Ok(())
            }
            Err(reason) => {
                self.log(i, state, false, vec![reason.to_string()], vec![]);
                Err(reason)
            }
        }
    }

    fn move_to(&mut self, i: usize, arg: &str) -> StepResult {
        let result = match self.world.resolve(arg) {
            ResolvedEntity::Location(loc) => {
                self.robot.location = loc.clone();
                Ok(format!("arrived at {loc}"))
            }
            _ => Err(FailureReason::Unresolved(format!("{arg:?} is not a known location"))),
        };
        self.finish(i, "MOVE_TO", result)
    }

    fn look_for_obj(&mut self, i: usize, arg: &str) -> StepResult {
        let result = match self.world.resolve(arg) {
            ResolvedEntity::Object(obj) => {
                let here = self.current_room().map(str::to_string);
                match self.objects.get(&obj) {
                    Some(loc) if here.is_some() && self.world.room_of(loc) == here.as_deref() => {
                        let loc = loc.clone();
                        self.robot.location = loc.clone();
                        self.seen.insert(obj.clone());
                        Ok(format!("found {obj} at {loc}"))
                    }
                    _ => Err(FailureReason::NotFound(format!(
                        "{obj} is not in the {}",
                        here.unwrap_or_else(|| "current room".into())
                    ))),
                }
            }
            _ => Err(FailureReason::Unresolved(format!("{arg:?} is not a known object"))),
        };
        self.finish(i, "LOOK_FOR_OBJ", result)
    }

    fn look_for_person(&mut self, i: usize, arg: &str) -> StepResult {
        let label = |s: SubState| format!("LOOK_FOR_PERSON/{}", s.label());
        let Some(descriptor) = parse_descriptor(arg, self.world).filter(|d| !d.operator) else {
            let reason = FailureReason::Unresolved(format!("{arg:?} does not describe a person"));
            self.log(i, &label(SubState::ExploreRoom), false, vec![reason.to_string()], vec![]);
            return Err(reason);
        };

        // EXPLORE_ROOM: everyone in this room fitting name/gesture.
        let room = self.current_room().map(str::to_string);
        let candidates: Vec<&PersonProfile> = self
            .world
            .persons()
            .values()
            .filter(|p| room.is_some() && self.person_room(&p.name) == room.as_deref())
            .filter(|p| {
                if descriptor.pronoun {
                    self.robot.engaged_person.as_deref() == Some(p.name.as_str())
                } else {
                    descriptor.name.as_deref().is_none_or(|n| n == p.name)
                        && descriptor.gesture.is_none_or(|g| Some(g) == p.gesture)
                }
            })
            .collect();
        let room = room.unwrap_or_else(|| "current room".into());
        if candidates.is_empty() {
            let reason = FailureReason::NotFound(format!("nobody matching {arg:?} in the {room}"));
            self.log(i, &label(SubState::ExploreRoom), false, vec![reason.to_string()], vec![]);
            return Err(reason);
        }
        let names: Vec<&str> = candidates.iter().map(|p| p.name.as_str()).collect();
        self.log(
            i,
            &label(SubState::ExploreRoom),
            true,
            vec![format!("in the {room}: {}", names.join(", "))],
            vec![],
        );

        // FACE_TO_PERSON: confirm gender by looking at the face.
        let Some(person) = candidates
            .into_iter()
            .find(|p| descriptor.gender.is_none_or(|g| g == p.gender))
        else {
            let reason = FailureReason::NotFound(format!("nobody matching {arg:?} in the {room}"));
            self.log(i, &label(SubState::FaceToPerson), false, vec![reason.to_string()], vec![]);
            return Err(reason);
        };
        self.log(
            i,
            &label(SubState::FaceToPerson),
            true,
            vec![format!("facing {}", person.name)],
            vec![],
        );

        // MOVE_TO_PERSON
        let loc = self.persons[&person.name].clone();
        self.robot.location = loc.clone();
        self.robot.engaged_person = Some(person.name.clone());
        self.log(
            i,
            &label(SubState::MoveToPerson),
            true,
            vec![format!("standing in front of {} at {loc}", person.name)],
            vec![],
        );
        self.log(i, "LOOK_FOR_PERSON", true, vec![], vec![]);
        Ok(())
    }

    /// The engaged person, if `arg` refers to them.
    fn engaged_matching(&self, arg: &str) -> Result<&'a PersonProfile, FailureReason> {
        let Some(engaged) = self.engaged_profile() else {
            return Err(FailureReason::Precondition("no person has been found yet".into()));
        };
        match parse_descriptor(arg, self.world) {
            Some(d) if !d.operator && (d.pronoun || d.matches(engaged)) => Ok(engaged),
            _ => Err(FailureReason::PersonMismatch(format!(
                "{arg:?} does not describe {}",
                engaged.name
            ))),
        }
    }

    fn follow(&mut self, i: usize, arg: &str) -> StepResult {
        let person = match self.engaged_matching(arg) {
            Ok(p) => p,
            Err(reason) => return self.finish(i, "FOLLOW", Err(reason)),
        };
        self.robot.following = true;
        let mut observations = Vec::new();
        let mut consumed = 0;
        let result = loop {
            if consumed >= self.options.follow_step_limit {
                break Err(FailureReason::NoTerminateSignal);
            }
            let Some(signal) = self.script.follow.get(self.follow_cursor) else {
                break Err(FailureReason::NoTerminateSignal);
            };
            self.follow_cursor += 1;
            consumed += 1;
            match signal {
                FollowSignal::Terminate => {
                    observations.push(format!("{} signals terminate", person.name));
                    break Ok(());
                }
                FollowSignal::Pause => observations.push(format!("{} signals pause", person.name)),
                FollowSignal::Follow(None) => observations.push(format!("{} signals follow", person.name)),
                FollowSignal::Follow(Some(target)) => match self.world.resolve(target) {
                    ResolvedEntity::Location(loc) => {
                        self.persons.insert(person.name.clone(), loc.clone());
                        self.robot.location = loc.clone();
                        observations.push(format!("following {} to {loc}", person.name));
                    }
                    _ => {
                        break Err(FailureReason::Unresolved(format!(
                            "scripted waypoint {target:?} is not a known location"
                        )))
                    }
                },
            }
        };
        self.robot.following = false;
        match result {
            Ok(()) => {
                self.log(i, "FOLLOW", true, observations, vec![]);
                Ok(())
            }
            Err(reason) => {
                observations.push(reason.to_string());
                self.log(i, "FOLLOW", false, observations, vec![]);
                Err(reason)
            }
        }
    }

    fn grasp(&mut self, i: usize, arg: &str) -> StepResult {
        let result = match self.world.resolve(arg) {
            ResolvedEntity::Object(obj) => {
                if !self.seen.contains(&obj) {
                    Err(FailureReason::Precondition(format!("{obj} has not been found yet")))
                } else if let Some(held) = &self.robot.holding {
                    Err(FailureReason::HandsFull(format!("already holding {held}")))
                } else if self.objects.get(&obj) != Some(&self.robot.location) {
                    Err(FailureReason::NotCoLocated(format!(
                        "{obj} is not at {}",
                        self.robot.location
                    )))
                } else {
                    self.objects.remove(&obj);
                    self.robot.holding = Some(obj.clone());
                    self.grasped_any = true;
                    Ok(format!("holding {obj}"))
                }
            }
            _ => Err(FailureReason::Unresolved(format!("{arg:?} is not a known object"))),
        };
        self.finish(i, "GRASP", result)
    }

    fn pass_to(&mut self, i: usize, arg: &str) -> StepResult {
        let result = self.pass_target(arg).map(|(recipient, placed_at)| {
            let obj = self.robot.holding.take().expect("checked by pass_target");
            if let Some(loc) = placed_at {
                self.objects.insert(obj.clone(), loc);
            }
            format!("handed {obj} to {recipient}")
        });
        self.finish(i, "PASS_TO", result)
    }

    /// Who receives the held object, and where it ends up if it is put down.
    fn pass_target(&self, arg: &str) -> Result<(String, Option<String>), FailureReason> {
        if self.robot.holding.is_none() {
            return Err(if self.grasped_any {
                FailureReason::HandsEmpty("the object was already handed over".into())
            } else {
                FailureReason::Precondition("nothing has been grasped".into())
            });
        }
        if let ResolvedEntity::Location(loc) = self.world.resolve(arg) {
            return if loc == self.robot.location {
                Ok((loc.clone(), Some(loc)))
            } else {
                Err(FailureReason::NotCoLocated(format!("robot is not at {loc}")))
            };
        }
        let Some(d) = parse_descriptor(arg, self.world) else {
            return Err(FailureReason::Unresolved(format!("{arg:?} does not describe a recipient")));
        };
        if d.operator {
            return Ok(("operator".into(), None));
        }
        if let Some(engaged) = self.engaged_profile() {
            if d.pronoun || d.matches(engaged) {
                return Ok((engaged.name.clone(), None));
            }
        }
        if d.pronoun {
            return Err(FailureReason::NotFound(format!("nobody to refer to as {arg:?}")));
        }
        self.world
            .persons()
            .values()
            .find(|p| self.persons.get(&p.name) == Some(&self.robot.location) && d.matches(p))
            .map(|p| (p.name.clone(), None))
            .ok_or_else(|| FailureReason::NotFound(format!("nobody matching {arg:?} at {}", self.robot.location)))
    }

    fn answer(&mut self, i: usize) -> StepResult {
        let Some(person) = self.engaged_profile() else {
            return self.finish(
                i,
                "ANSWER",
                Err(FailureReason::Precondition("no person has been found yet".into())),
            );
        };
        let Some(question) = self.script.questions.get(self.question_cursor) else {
            return self.finish(i, "ANSWER", Err(FailureReason::NoQuestion));
        };
        self.question_cursor += 1;
        let heard = format!("{} asks {question:?}", person.name);
        match self.answerer.answer(question) {
            AnswerReply::Answer(text) => {
                self.log(i, "ANSWER", true, vec![heard], vec![text]);
                Ok(())
            }
            AnswerReply::CannotAnswer => {
                self.log(i, "ANSWER", false, vec![heard], vec![]);
                Err(FailureReason::CannotAnswer)
            }
            AnswerReply::Unavailable(e) => {
                self.log(i, "ANSWER", false, vec![heard], vec![]);
                Err(FailureReason::AnswererUnavailable(e))
            }
        }
    }
}

/// Runs `machine` from `start`. The first failing state ends the run.
pub fn run(
    machine: &StateMachine,
    world: &WorldModel,
    start: RobotState,
    script: &InteractionScript,
    answerer: &dyn Answerer,
    options: &RunOptions,
) -> ExecutionTrace {
    let mut sim = Sim {
        world,
        script,
        answerer,
        options,
        persons: world
            .persons()
            .values()
            .map(|p| (p.name.clone(), p.location.clone()))
            .collect(),
        objects: world.objects().clone(),
        robot: start,
        seen: BTreeSet::new(),
        grasped_any: false,
        follow_cursor: 0,
        question_cursor: 0,
        entries: Vec::new(),
    };

    let mut verdict = ExecutionVerdict::Success;
    if world.room_of(&sim.robot.location).is_none() {
        verdict = ExecutionVerdict::Failure {
            step: 0,
            reason: FailureReason::Unresolved(format!("start location {:?} is not in the world", sim.robot.location)),
        };
    } else {
        for (i, state) in machine.states().iter().enumerate() {
            if let Err(reason) = sim.step(i, &state.step) {
                verdict = ExecutionVerdict::Failure { step: i, reason };
                break;
            }
        }
    }
    ExecutionTrace {
        entries: sim.entries,
        verdict,
        final_state: sim.robot,
    }
}
